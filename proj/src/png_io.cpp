#include "stainforge/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

namespace stainforge {

namespace {

constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

void put_u32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

std::uint32_t get_u32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const unsigned char* data, std::size_t n) {
    put_u32(out, static_cast<std::uint32_t>(n));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data, data + n);
    const auto crc = crc32(0, out.data() + crc_start, static_cast<uInt>(n + 4));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImagePatch& img) {
    if (img.range != ValueRange::unit())
        throw InputError("write_png: image must be in unit range");
    const int h = static_cast<int>(img.height());
    const int w = static_cast<int>(img.width());
    if (h <= 0 || w <= 0) throw InputError("write_png: empty image");

    // Raw scanlines, filter byte 0 per row.
    std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (1 + 3 * w));
    std::size_t k = 0;
    for (int y = 0; y < h; ++y) {
        raw[k++] = 0;
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = img.ch[static_cast<std::size_t>(c)](y, x);
                v = std::min(1.0, std::max(0.0, v));
                raw[k++] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
    }

    uLongf zcap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> zdata(zcap);
    if (compress2(zdata.data(), &zcap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("write_png: deflate failed");
    zdata.resize(zcap);

    std::vector<unsigned char> out;
    out.insert(out.end(), kSignature, kSignature + 8);
    unsigned char ihdr[13];
    ihdr[0] = static_cast<unsigned char>(w >> 24);
    ihdr[1] = static_cast<unsigned char>(w >> 16);
    ihdr[2] = static_cast<unsigned char>(w >> 8);
    ihdr[3] = static_cast<unsigned char>(w);
    ihdr[4] = static_cast<unsigned char>(h >> 24);
    ihdr[5] = static_cast<unsigned char>(h >> 16);
    ihdr[6] = static_cast<unsigned char>(h >> 8);
    ihdr[7] = static_cast<unsigned char>(h);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type: truecolor
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter
    ihdr[12] = 0;  // interlace
    append_chunk(out, "IHDR", ihdr, 13);
    append_chunk(out, "IDAT", zdata.data(), zdata.size());
    append_chunk(out, "IEND", nullptr, 0);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_png: cannot open " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write_png: write failed for " + path.string());
}

ImagePatch read_png(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_png: cannot open " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kSignature, 8) != 0)
        throw IoError("read_png: not a PNG file: " + path.string());

    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    std::vector<unsigned char> zdata;
    std::size_t pos = 8;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= buf.size()) {
        const std::uint32_t len = get_u32(&buf[pos]);
        if (pos + 12 + len > buf.size()) throw IoError("read_png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(&buf[pos + 4]);
        const unsigned char* data = &buf[pos + 8];
        const auto expect = get_u32(&buf[pos + 8 + len]);
        if (crc32(0, &buf[pos + 4], len + 4) != expect)
            throw IoError("read_png: CRC mismatch in " + path.string());
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = static_cast<int>(get_u32(data));
            h = static_cast<int>(get_u32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw IoError("read_png: interlaced PNG not supported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            zdata.insert(zdata.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend) throw IoError("read_png: missing IHDR/IEND");
    if (bit_depth != 8) throw IoError("read_png: only 8-bit PNGs supported");
    int nch = 0;
    switch (color_type) {
        case 0: nch = 1; break;
        case 2: nch = 3; break;
        case 6: nch = 4; break;
        default: throw IoError("read_png: unsupported color type");
    }
    if (w <= 0 || h <= 0) throw IoError("read_png: bad dimensions");

    const std::size_t stride = static_cast<std::size_t>(w) * nch;
    std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (stride + 1));
    uLongf rawlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rawlen, zdata.data(), static_cast<uLong>(zdata.size())) != Z_OK ||
        rawlen != raw.size())
        throw IoError("read_png: inflate failed for " + path.string());

    // Undo per-row filtering in place.
    std::vector<unsigned char> prev(stride, 0);
    std::vector<unsigned char> cur(stride);
    ImagePatch img(h, w, ValueRange::unit());
    for (int y = 0; y < h; ++y) {
        const unsigned char* row = &raw[static_cast<std::size_t>(y) * (stride + 1)];
        const int filter = row[0];
        const unsigned char* src = row + 1;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = (i >= static_cast<std::size_t>(nch)) ? cur[i - nch] : 0;
            const int b = prev[i];
            const int c = (i >= static_cast<std::size_t>(nch)) ? prev[i - nch] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw IoError("read_png: bad filter type");
            }
            cur[i] = static_cast<unsigned char>(v & 0xFF);
        }
        for (int x = 0; x < w; ++x) {
            const unsigned char* px = &cur[static_cast<std::size_t>(x) * nch];
            double r, g, bch;
            if (nch == 1) {
                r = g = bch = px[0] / 255.0;
            } else {
                r = px[0] / 255.0;
                g = px[1] / 255.0;
                bch = px[2] / 255.0;
            }
            img.ch[0](y, x) = r;
            img.ch[1](y, x) = g;
            img.ch[2](y, x) = bch;
        }
        std::swap(prev, cur);
    }
    return img;
}

}  // namespace stainforge
