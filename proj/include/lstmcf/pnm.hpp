#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lstmcf {

// Binary netpbm images. P6 is 3 channels interleaved, P5 is 1 channel; a
// maxval above 255 means two bytes per sample, most significant first.
struct PnmImage {
  std::size_t width = 0, height = 0, channels = 1;
  unsigned maxval = 255;
  std::vector<std::uint16_t> samples;  // row-major, channels interleaved
  std::vector<std::string> comments;   // header comment lines without '#'
};

PnmImage read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const PnmImage& img);

// Parses from / serializes to memory; read_pnm and write_pnm wrap these.
PnmImage decode_pnm(const std::string& bytes, const std::string& source = "<memory>");
std::string encode_pnm(const PnmImage& img);

}  // namespace lstmcf
