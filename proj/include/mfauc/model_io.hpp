#pragma once

#include <filesystem>

#include "mfauc/factor_model.hpp"

namespace mfauc {

/// Text format: "MFAUC-FACTORS v1", then "m n k", then the m rows of U and
/// the n rows of V with 17 significant digits (exact round trip).
void save_factors(const RowMatrix<double>& U, const RowMatrix<double>& V,
                  const std::filesystem::path& path);
inline void save_factors(const FactorModeld& model, const std::filesystem::path& path) {
  save_factors(model.U, model.V, path);
}

FactorModeld load_factors(const std::filesystem::path& path);

}  // namespace mfauc
