#include "cmhd/fields_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace cmhd {

void write_field_csv(const std::string& path, const Scalar& f, const Mask* mask) {
  std::ofstream os(path);
  if (!os) throw PreconditionError("cannot open " + path);
  os << "point,x,y,z,value\n";
  char buf[160];
  for (std::size_t p = 0; p < f.size(); ++p) {
    if (mask && !(*mask)[p]) continue;
    auto x = f.g->xyz(p);
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", p, x[0], x[1], x[2], f[p]);
    os << buf;
  }
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

void write_field_binary(const std::string& path, const Scalar& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PreconditionError("cannot open " + path);
  os.write(reinterpret_cast<const char*>(f.v.data()),
           static_cast<std::streamsize>(f.v.size() * sizeof(double)));
}

}  // namespace cmhd
