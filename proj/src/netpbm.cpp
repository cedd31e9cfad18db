#include "smvit/netpbm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace smvit {

namespace {

class ByteReader {
  public:
    explicit ByteReader(const std::string& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw NetpbmError("cannot open '" + path + "'", 0);
        bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    std::size_t pos() const { return pos_; }
    bool eof() const { return pos_ >= bytes_.size(); }

    unsigned char peek() const { return static_cast<unsigned char>(bytes_[pos_]); }
    unsigned char next() { return static_cast<unsigned char>(bytes_[pos_++]); }

    void skip_ws_and_comments() {
        while (!eof()) {
            const unsigned char c = peek();
            if (c == '#') {
                while (!eof() && next() != '\n') {}
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    int read_int(const char* what) {
        skip_ws_and_comments();
        if (eof()) throw NetpbmError(std::string("unexpected end of header reading ") + what, pos_);
        if (!std::isdigit(peek()))
            throw NetpbmError(std::string("expected integer for ") + what, pos_);
        long v = 0;
        while (!eof() && std::isdigit(peek())) {
            v = v * 10 + (next() - '0');
            if (v > 1000000) throw NetpbmError(std::string("implausible value for ") + what, pos_);
        }
        return static_cast<int>(v);
    }

    const std::vector<char>& bytes() const { return bytes_; }
    void advance(std::size_t n) { pos_ += n; }

  private:
    std::string path_;
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

Image read_netpbm(const std::string& path, char expect_kind, int channels) {
    ByteReader r(path);
    if (r.eof() || r.next() != 'P')
        throw NetpbmError("bad magic, expected 'P" + std::string(1, expect_kind) + "'", 0);
    if (r.eof() || r.next() != expect_kind)
        throw NetpbmError("bad magic, expected 'P" + std::string(1, expect_kind) + "'", 1);

    const int cols = r.read_int("width");
    const int rowsv = r.read_int("height");
    const int maxval = r.read_int("maxval");
    if (cols <= 0 || rowsv <= 0)
        throw NetpbmError("non-positive image dimensions", r.pos());
    if (maxval != 255)
        throw NetpbmError("unsupported maxval " + std::to_string(maxval) + ", only 255", r.pos());
    // exactly one whitespace byte separates header from payload
    if (r.eof()) throw NetpbmError("missing payload", r.pos());
    const unsigned char sep = r.next();
    if (sep != '\n' && sep != ' ' && sep != '\t' && sep != '\r')
        throw NetpbmError("expected whitespace before payload", r.pos() - 1);

    const std::size_t need =
        static_cast<std::size_t>(cols) * rowsv * channels;
    if (r.bytes().size() - r.pos() < need)
        throw NetpbmError("truncated payload, need " + std::to_string(need) + " bytes, have " +
                              std::to_string(r.bytes().size() - r.pos()),
                          r.pos());

    Image img(rowsv, cols, channels);
    const char* p = r.bytes().data() + r.pos();
    for (std::size_t i = 0; i < need; ++i)
        img.data[i] = static_cast<unsigned char>(p[i]) / 255.0;
    return img;
}

void write_netpbm(const std::string& path, const Image& img, char kind, int channels) {
    if (img.channels != channels)
        throw std::invalid_argument("write_netpbm: image has " + std::to_string(img.channels) +
                                    " channels, format needs " + std::to_string(channels));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << 'P' << kind << '\n' << img.cols << ' ' << img.rows << '\n' << 255 << '\n';
    std::vector<char> buf(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        buf[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace

Image read_pgm(const std::string& path) { return read_netpbm(path, '5', 1); }
Image read_ppm(const std::string& path) { return read_netpbm(path, '6', 3); }
void write_pgm(const std::string& path, const Image& img) { write_netpbm(path, img, '5', 1); }
void write_ppm(const std::string& path, const Image& img) { write_netpbm(path, img, '6', 3); }

}  // namespace smvit
