/// @file fields_io.hpp
/// @brief Debug dumps of grid fields (CSV and flat binary).
#ifndef CMHD_FIELDS_IO_HPP
#define CMHD_FIELDS_IO_HPP

#include <string>

#include "cmhd/grid.hpp"

namespace cmhd {

/// Columns: point, x, y, z, value. A mask, when given, restricts the rows.
void write_field_csv(const std::string& path, const Scalar& f, const Mask* mask = nullptr);
/// Round-trip formatting for report cells: %.10e, with nan / inf / -inf spelled out.
std::string csv_number(double v);

/// Raw little-endian doubles, no header.
void write_field_binary(const std::string& path, const Scalar& f);

}  // namespace cmhd

#endif  // CMHD_FIELDS_IO_HPP
