#include "mfauc/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mfauc/errors.hpp"

namespace mfauc {

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t state) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t a = 0; a < size; ++a) {
    state ^= p[a];
    state *= 0x100000001b3ull;
  }
  return state;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void ExperimentManifest::add_input(const std::filesystem::path& path) {
  inputs.emplace_back(path.string(), file_digest(path));
}

void ExperimentManifest::add_output(const std::filesystem::path& path) {
  outputs.emplace_back(path.string(), file_digest(path));
}

std::optional<std::string> ExperimentManifest::param(const std::string& key) const {
  for (const auto& [k, v] : params)
    if (k == key) return v;
  return std::nullopt;
}

namespace {

// Values are stored verbatim up to the end of line; newlines are escaped.
std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else out += c;
  }
  return out;
}

std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t a = 0; a < s.size(); ++a) {
    if (s[a] == '\\' && a + 1 < s.size()) {
      ++a;
      out += s[a] == 'n' ? '\n' : s[a];
    } else {
      out += s[a];
    }
  }
  return out;
}

}  // namespace

void ExperimentManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "# mfauc manifest v1\n";
  out << "command=" << escape(command) << "\n";
  out << "args.count=" << args.size() << "\n";
  for (std::size_t a = 0; a < args.size(); ++a) out << "args." << a << "=" << escape(args[a]) << "\n";
  for (const auto& [k, v] : params) out << "param." << k << "=" << escape(v) << "\n";
  for (const auto& [k, v] : seeds) out << "seed." << k << "=" << v << "\n";
  for (std::size_t a = 0; a < inputs.size(); ++a)
    out << "input." << a << ".path=" << escape(inputs[a].first) << "\n"
        << "input." << a << ".fnv1a64=" << inputs[a].second << "\n";
  for (std::size_t a = 0; a < outputs.size(); ++a)
    out << "output." << a << ".path=" << escape(outputs[a].first) << "\n"
        << "output." << a << ".fnv1a64=" << outputs[a].second << "\n";
  for (const auto& [k, v] : versions) out << "version." << k << "=" << escape(v) << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", wall_clock_seconds);
  out << "wall_clock_seconds=" << buf << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

ExperimentManifest ExperimentManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  ExperimentManifest m;
  std::string line;
  std::size_t lineno = 0;
  std::size_t arg_count = 0;
  std::vector<std::pair<std::string, std::string>> in_raw, out_raw;
  auto slot = [](std::vector<std::pair<std::string, std::string>>& v, std::size_t a)
      -> std::pair<std::string, std::string>& {
    if (v.size() <= a) v.resize(a + 1);
    return v[a];
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = unescape(line.substr(eq + 1));
    auto rest = [&](const char* prefix) { return key.substr(std::string(prefix).size()); };
    try {
      if (key == "command") {
        m.command = value;
      } else if (key == "args.count") {
        arg_count = std::stoul(value);
      } else if (key.rfind("args.", 0) == 0) {
        const std::size_t a = std::stoul(rest("args."));
        if (m.args.size() <= a) m.args.resize(a + 1);
        m.args[a] = value;
      } else if (key.rfind("param.", 0) == 0) {
        m.params.emplace_back(rest("param."), value);
      } else if (key.rfind("seed.", 0) == 0) {
        m.seeds.emplace_back(rest("seed."), std::stoull(value));
      } else if (key.rfind("input.", 0) == 0 || key.rfind("output.", 0) == 0) {
        const bool is_in = key[0] == 'i';
        const std::string tail = rest(is_in ? "input." : "output.");
        const auto dot = tail.find('.');
        const std::size_t a = std::stoul(tail.substr(0, dot));
        auto& entry = slot(is_in ? in_raw : out_raw, a);
        (tail.substr(dot + 1) == "path" ? entry.first : entry.second) = value;
      } else if (key.rfind("version.", 0) == 0) {
        m.versions.emplace_back(rest("version."), value);
      } else if (key == "wall_clock_seconds") {
        m.wall_clock_seconds = std::stod(value);
      } else {
        throw ParseError(lineno, "unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ParseError(lineno, "bad value for '" + key + "'");
    }
  }
  if (m.args.size() != arg_count) throw ParseError(lineno, "argument count mismatch");
  m.inputs = std::move(in_raw);
  m.outputs = std::move(out_raw);
  return m;
}

}  // namespace mfauc
