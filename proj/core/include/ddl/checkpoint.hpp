#pragma once

#include <iosfwd>
#include <string>

#include "ddl/encoder.hpp"

namespace ddl {

/// Textual key -> tensor checkpoint.
///
/// Layout (line oriented, space separated, %.17g floats so values
/// round-trip exactly):
///
///   ddl-checkpoint v1
///   activation <tanh|identity>
///   layers <L>
///   tensor layer<i>.weight <rows> <cols>
///   <cols values per line, rows lines>
///   tensor layer<i>.bias 1 <n>
///   <n values on one line>
///   ...
///   tensor head <rows> <cols>
///   ...
///   end
void save_checkpoint(std::ostream& out, const EncoderNet& net);
EncoderNet load_checkpoint(std::istream& in);

void save_checkpoint_file(const std::string& path, const EncoderNet& net);
EncoderNet load_checkpoint_file(const std::string& path);

/// 17-significant-digit formatting ("%.17g"): doubles survive a text
/// round-trip bit-exactly, which keeps outputs byte-identical across runs.
std::string format_g17(double value);

} // namespace ddl
