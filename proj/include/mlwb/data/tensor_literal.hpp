#pragma once

#include <string>
#include <string_view>

#include "mlwb/tensor/tensor.hpp"

namespace mlwb {

/// value := number | true | false | '[' value (',' value)* ']'
/// number := -?digits(.digits)?([eE][+-]?digits)?
/// Numbers beyond the float32 range are errors; underflow rounds toward zero.
/// Booleans map to 1/0 and the nesting gives the shape; a bare number is a
/// rank-0 tensor. Errors carry the byte offset, and ragged nesting also the
/// index path of the offending element (e.g. "[1]").
Tensor parse_tensor_literal(std::string_view text);

/// Nested-bracket rendering that parse_tensor_literal reads back bit-exact.
std::string format_tensor_literal(const Tensor& t);

}  // namespace mlwb
