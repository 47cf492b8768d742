#pragma once

// Plain (P1) portable bitmap I/O for unit-cell occupancy grids.
//
// Image columns run along a1 and rows along a2, with the top image row at the
// far end of a2 (the picture is the cell seen from above). A '1' pixel means
// film present.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "maglattice/error.hpp"

namespace maglattice {

struct Bitmap {
  int width = 0;   // nx
  int height = 0;  // ny
  // Indexed [j * width + i] with j counted from the bottom row.
  std::vector<std::uint8_t> bits;
};

namespace detail {

// Next whitespace-separated token, skipping '#' comments.
inline bool pbm_token(std::istream& in, std::string& tok) {
  tok.clear();
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (!std::isspace(ch)) break;
  }
  if (ch == EOF) return false;
  tok.push_back(static_cast<char>(ch));
  while ((ch = in.peek()) != EOF && !std::isspace(ch) && ch != '#') tok.push_back(static_cast<char>(in.get()));
  return true;
}

}  // namespace detail

inline Bitmap read_pbm(std::istream& in) {
  std::string tok;
  if (!detail::pbm_token(in, tok) || tok != "P1") throw InputError("pbm: expected plain 'P1' magic number");
  Bitmap bm;
  auto read_int = [&](const char* what) {
    if (!detail::pbm_token(in, tok)) throw InputError(std::string("pbm: missing ") + what);
    try {
      std::size_t pos = 0;
      const int v = std::stoi(tok, &pos);
      if (pos != tok.size()) throw InputError("");
      return v;
    } catch (const std::exception&) {
      throw InputError(std::string("pbm: malformed ") + what + " '" + tok + "'");
    }
  };
  bm.width = read_int("width");
  bm.height = read_int("height");
  if (bm.width < 2 || bm.height < 2) throw InputError("pbm: image must be at least 2x2");

  std::vector<std::uint8_t> raster;
  raster.reserve(static_cast<std::size_t>(bm.width) * bm.height);
  const std::size_t total = static_cast<std::size_t>(bm.width) * bm.height;
  // Pixels may or may not be separated by whitespace.
  while (raster.size() < total && detail::pbm_token(in, tok)) {
    for (char c : tok) {
      if (c != '0' && c != '1') throw InputError(std::string("pbm: invalid pixel character '") + c + "'");
      raster.push_back(static_cast<std::uint8_t>(c - '0'));
    }
  }
  if (raster.size() != total)
    throw InputError("pbm: expected " + std::to_string(total) + " pixels, found " + std::to_string(raster.size()));

  bm.bits.resize(total);
  for (int row = 0; row < bm.height; ++row) {
    const int j = bm.height - 1 - row;
    for (int i = 0; i < bm.width; ++i)
      bm.bits[static_cast<std::size_t>(j) * bm.width + i] = raster[static_cast<std::size_t>(row) * bm.width + i];
  }
  return bm;
}

inline Bitmap read_pbm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("pbm: cannot open '" + path + "'");
  return read_pbm(in);
}

inline void write_pbm(std::ostream& out, const Bitmap& bm) {
  out << "P1\n" << bm.width << ' ' << bm.height << '\n';
  for (int row = 0; row < bm.height; ++row) {
    const int j = bm.height - 1 - row;
    for (int i = 0; i < bm.width; ++i) {
      if (i) out << ' ';
      out << static_cast<int>(bm.bits[static_cast<std::size_t>(j) * bm.width + i]);
    }
    out << '\n';
  }
}

}  // namespace maglattice
