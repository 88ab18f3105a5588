#include "lstmcf/pnm.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "lstmcf/error.hpp"

namespace lstmcf {

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  std::string token(std::vector<std::string>& comments) {
    for (;;) {
      while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
      if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
        const std::size_t end = bytes_.find('\n', pos_);
        std::string line = bytes_.substr(pos_ + 1, end == std::string::npos ? std::string::npos : end - pos_ - 1);
        if (!line.empty() && line.front() == ' ') line.erase(0, 1);
        comments.push_back(line);
        pos_ = end == std::string::npos ? bytes_.size() : end + 1;
        continue;
      }
      break;
    }
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_])) && bytes_[pos_] != '#') ++pos_;
    if (start == pos_) fail("truncated header");
    return bytes_.substr(start, pos_ - start);
  }

  std::size_t number(std::vector<std::string>& comments, const char* what) {
    const std::string t = token(comments);
    for (char c : t)
      if (!std::isdigit(static_cast<unsigned char>(c))) fail(std::string("bad ") + what + " '" + t + "'");
    if (t.size() > 9) fail(std::string(what) + " too large");
    return std::stoul(t);
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) fail("missing raster");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& why) const { throw FormatError(source_ + ": " + why); }

 private:
  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

PnmImage decode_pnm(const std::string& bytes, const std::string& source) {
  HeaderReader in(bytes, source);
  PnmImage img;
  const std::string magic = in.token(img.comments);
  if (magic == "P6")
    img.channels = 3;
  else if (magic == "P5")
    img.channels = 1;
  else
    in.fail("unsupported magic '" + magic + "' (expected P5 or P6)");
  img.width = in.number(img.comments, "width");
  img.height = in.number(img.comments, "height");
  const std::size_t maxval = in.number(img.comments, "maxval");
  if (img.width == 0 || img.height == 0) in.fail("zero image dimension");
  if (maxval == 0 || maxval > 65535) in.fail("maxval out of range");
  img.maxval = static_cast<unsigned>(maxval);
  const std::size_t start = in.raster_start();
  const std::size_t bps = img.maxval > 255 ? 2 : 1;
  const std::size_t n = img.width * img.height * img.channels;
  if (bytes.size() - start < n * bps) in.fail("raster truncated");
  img.samples.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + start);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = bps == 2 ? (unsigned(p[2 * i]) << 8) | p[2 * i + 1] : p[i];
    if (v > img.maxval) in.fail("sample exceeds maxval");
    img.samples[i] = static_cast<std::uint16_t>(v);
  }
  return img;
}

std::string encode_pnm(const PnmImage& img) {
  if (img.channels != 1 && img.channels != 3) throw FormatError("pnm: channels must be 1 or 3");
  if (img.samples.size() != img.width * img.height * img.channels) throw FormatError("pnm: sample count mismatch");
  if (img.maxval == 0 || img.maxval > 65535) throw FormatError("pnm: maxval out of range");
  std::ostringstream os;
  os << (img.channels == 3 ? "P6" : "P5") << '\n';
  for (const std::string& c : img.comments) os << "# " << c << '\n';
  os << img.width << ' ' << img.height << '\n' << img.maxval << '\n';
  std::string out = os.str();
  const bool wide = img.maxval > 255;
  out.reserve(out.size() + img.samples.size() * (wide ? 2 : 1));
  for (std::uint16_t v : img.samples) {
    if (v > img.maxval) throw FormatError("pnm: sample exceeds maxval");
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

PnmImage read_pnm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path.string() + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes, path.string());
}

void write_pnm(const std::filesystem::path& path, const PnmImage& img) {
  const std::string bytes = encode_pnm(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError(path.string() + ": cannot write");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace lstmcf
