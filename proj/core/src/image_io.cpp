#include "transnet/image_io.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "transnet/error.hpp"

namespace transnet {

void write_netpbm(const std::filesystem::path& path, const ImageU8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("netpbm: unsupported channel count " + std::to_string(image.channels));
  }
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw DataError("netpbm: pixel buffer does not match geometry for " + path.string());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << (image.channels == 3 ? "P6" : "P5") << '\n'
      << image.width << ' ' << image.height << '\n'
      << 255 << '\n';
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::vector<char>& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::size_t next_number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      ++pos_;
      if (++digits > 9) fail("header number too long");
    }
    if (digits == 0) fail("malformed header");
    return value;
  }

  // exactly one whitespace byte separates maxval from the raster
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("missing whitespace before raster");
    }
    return pos_ + 1;
  }

  std::size_t pos() const noexcept { return pos_; }
  void advance(std::size_t n) noexcept { pos_ += n; }

  [[noreturn]] void fail(const std::string& why) const {
    throw LoadError("cannot read image " + path_.string() + ": " + why);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<char>& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageU8 read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read image " + path.string() + ": unreadable file");
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  HeaderReader reader(bytes, path);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    reader.fail("not a binary PGM/PPM (P5/P6)");
  }
  reader.advance(2);
  ImageU8 image;
  image.channels = bytes[1] == '6' ? 3 : 1;
  image.width = reader.next_number();
  image.height = reader.next_number();
  const std::size_t maxval = reader.next_number();
  if (maxval != 255) reader.fail("maxval must be 255, got " + std::to_string(maxval));
  if (image.width == 0 || image.height == 0) reader.fail("zero image dimension");
  const std::size_t start = reader.raster_start();
  const std::size_t expected = image.width * image.height * image.channels;
  if (bytes.size() - start < expected) reader.fail("truncated raster");
  image.pixels.assign(reinterpret_cast<const std::uint8_t*>(bytes.data()) + start,
                      reinterpret_cast<const std::uint8_t*>(bytes.data()) + start + expected);
  return image;
}

}  // namespace transnet
