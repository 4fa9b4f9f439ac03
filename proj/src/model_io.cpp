#include "mfauc/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "mfauc/errors.hpp"

namespace mfauc {

namespace {

void write_rows(std::FILE* f, const RowMatrix<double>& M) {
  for (Index r = 0; r < M.rows(); ++r) {
    for (Index c = 0; c < M.cols(); ++c)
      std::fprintf(f, c == 0 ? "%.17g" : " %.17g", M(r, c));
    std::fputc('\n', f);
  }
}

}  // namespace

void save_factors(const RowMatrix<double>& U, const RowMatrix<double>& V,
                  const std::filesystem::path& path) {
  if (U.cols() != V.cols()) throw ParameterError("U and V ranks differ");
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  std::fprintf(f, "MFAUC-FACTORS v1\n%ld %ld %ld\n", static_cast<long>(U.rows()),
               static_cast<long>(V.rows()), static_cast<long>(U.cols()));
  write_rows(f, U);
  write_rows(f, V);
  const bool bad = std::ferror(f) != 0;
  if (std::fclose(f) != 0 || bad) throw IoError("failed writing " + path.string());
}

FactorModeld load_factors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line.rfind("MFAUC-FACTORS v1", 0) != 0)
    throw ParseError(lineno, "expected header 'MFAUC-FACTORS v1'");
  ++lineno;
  long m = -1, n = -1, k = -1;
  if (!std::getline(in, line)) throw ParseError(lineno, "missing dimensions");
  {
    std::istringstream ss(line);
    if (!(ss >> m >> n >> k) || m < 0 || n < 0 || k < 1)
      throw ParseError(lineno, "bad dimensions line");
  }
  auto read_matrix = [&](long rows) {
    RowMatrix<double> M(rows, k);
    for (long r = 0; r < rows; ++r) {
      ++lineno;
      if (!std::getline(in, line)) throw ParseError(lineno, "unexpected end of file");
      std::istringstream ss(line);
      for (long c = 0; c < k; ++c) {
        std::string tok;
        if (!(ss >> tok)) throw ParseError(lineno, "too few values");
        try {
          std::size_t used = 0;
          M(r, c) = std::stod(tok, &used);
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          throw ParseError(lineno, "bad number '" + tok + "'");
        }
      }
      std::string extra;
      if (ss >> extra) throw ParseError(lineno, "too many values");
    }
    return M;
  };
  RowMatrix<double> U = read_matrix(m);
  RowMatrix<double> V = read_matrix(n);
  return FactorModeld(std::move(U), std::move(V));
}

}  // namespace mfauc
