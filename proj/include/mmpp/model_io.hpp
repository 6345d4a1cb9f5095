#pragma once

#include "mmpp/es_single.hpp"
#include "mmpp/multilevel.hpp"

#include <iosfwd>
#include <variant>

namespace mmpp {

inline constexpr int kModelFormatVersion = 1;

using StoredModel = std::variant<FittedModel, MultilevelFit>;

/// JSON model files. Doubles are written in shortest round-trip form, so a
/// load reproduces every parameter bit for bit.
void save_model(std::ostream& out, const FittedModel& model);
void save_model(std::ostream& out, const MultilevelFit& fit);
/// Throws FormatError with the byte offset or the offending key.
StoredModel load_model(std::istream& in);

/// The single-level part of either kind.
const FittedModel& base_model(const StoredModel& stored);

} // namespace mmpp
