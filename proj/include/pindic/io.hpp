#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pindic/error.hpp"
#include "pindic/grid.hpp"

// File formats.
//
//   .pgm   binary P5, maxval 255, the 8-bit interchange view. Import maps
//          byte p to double p; export clamps to [0,255] and rounds
//          half-away-from-zero. Lossy by design.
//   .dicf  lossless float container: magic "DICF", u16 version=1, u16
//          channels (1 scalar / 2 vector), u32 width, u32 height, then
//          channels*width*height f64 values, row-major, channel-planar
//          (all u, then all v). All integers and floats little-endian.
//   .csv   one grid row per line, comma-separated, LF endings, shortest
//          round-trip decimal form. Vector fields write the u rows followed
//          by the v rows (2*height lines).

namespace pindic {

enum class FieldFormat { pgm, dicf, csv };

namespace detail {

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open for reading: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw io_error("read failed: " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw io_error("write failed: " + path.string());
}

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct ByteReader {
    std::string_view bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size()) {
            throw format_error(std::string("truncated ") + what, bytes.size());
        }
    }
    std::uint8_t u8() {
        need(1, "data");
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(
            static_cast<std::uint8_t>(bytes[pos]) |
            (static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes[pos + 1])) << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
        }
        pos += 8;
        return std::bit_cast<double>(v);
    }
};

inline bool is_pnm_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Skips whitespace and '#' comment lines, returns the offset of the next
// token byte, or npos at end of input.
inline std::size_t pnm_skip(std::string_view bytes, std::size_t pos) {
    while (pos < bytes.size()) {
        if (is_pnm_space(bytes[pos])) {
            ++pos;
        } else if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else {
            return pos;
        }
    }
    return std::string_view::npos;
}

inline long pnm_uint_token(std::string_view bytes, std::size_t& pos, const char* what) {
    std::size_t start = pnm_skip(bytes, pos);
    if (start == std::string_view::npos) {
        throw format_error(std::string("missing ") + what, bytes.size());
    }
    long value = 0;
    std::size_t p = start;
    while (p < bytes.size() && bytes[p] >= '0' && bytes[p] <= '9') {
        value = value * 10 + (bytes[p] - '0');
        if (value > 1'000'000'000L) throw format_error(std::string(what) + " out of range", start);
        ++p;
    }
    if (p == start) throw format_error(std::string("malformed ") + what, start);
    pos = p;
    return value;
}

}  // namespace detail

// ---- PGM (binary P5, maxval 255) -------------------------------------------

inline ScalarField decode_pgm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw format_error("not a binary P5 PGM", 0);
    }
    std::size_t pos = 2;
    long w = detail::pnm_uint_token(bytes, pos, "width");
    long h = detail::pnm_uint_token(bytes, pos, "height");
    std::size_t maxval_at = detail::pnm_skip(bytes, pos);
    long maxval = detail::pnm_uint_token(bytes, pos, "maxval");
    if (maxval != 255) {
        throw format_error("unsupported maxval " + std::to_string(maxval) + ", expected 255",
                           maxval_at);
    }
    if (pos >= bytes.size() || !detail::is_pnm_space(bytes[pos])) {
        throw format_error("expected single whitespace after maxval", pos);
    }
    ++pos;  // exactly one whitespace byte separates header from payload
    if (w < 1 || h < 1) throw format_error("degenerate image dimensions", 2);
    ScalarField field(static_cast<int>(w), static_cast<int>(h));
    const std::size_t need = field.size();
    if (bytes.size() - pos < need) {
        throw format_error("truncated pixel payload: expected " + std::to_string(need) +
                               " bytes, got " + std::to_string(bytes.size() - pos),
                           bytes.size());
    }
    for (std::size_t i = 0; i < need; ++i) {
        field.values[i] = static_cast<double>(static_cast<std::uint8_t>(bytes[pos + i]));
    }
    return field;
}

inline std::string encode_pgm(const ScalarField& field) {
    std::string out = "P5\n" + std::to_string(field.width) + " " + std::to_string(field.height) +
                      "\n255\n";
    out.reserve(out.size() + field.size());
    for (double v : field.values) {
        double c = std::clamp(v, 0.0, 255.0);
        out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(c))));
    }
    return out;
}

// ---- DICF ------------------------------------------------------------------

namespace detail {

inline std::string encode_dicf(int width, int height, std::uint16_t channels,
                               const std::vector<double>* const* planes) {
    std::string out = "DICF";
    put_u16(out, 1);
    put_u16(out, channels);
    put_u32(out, static_cast<std::uint32_t>(width));
    put_u32(out, static_cast<std::uint32_t>(height));
    for (std::uint16_t c = 0; c < channels; ++c) {
        for (double v : *planes[c]) put_f64(out, v);
    }
    return out;
}

struct DicfHeader {
    std::uint16_t channels;
    int width, height;
    ByteReader reader;
};

inline DicfHeader decode_dicf_header(std::string_view bytes) {
    if (bytes.size() < 4 || bytes.substr(0, 4) != "DICF") {
        throw format_error("bad magic, expected \"DICF\"", 0);
    }
    ByteReader r{bytes, 4};
    std::uint16_t version = r.u16("version");
    if (version != 1) throw format_error("unsupported version " + std::to_string(version), 4);
    std::uint16_t channels = r.u16("channel count");
    if (channels != 1 && channels != 2) {
        throw format_error("bad channel count " + std::to_string(channels), 6);
    }
    std::uint32_t w = r.u32("width");
    std::uint32_t h = r.u32("height");
    if (w < 1 || h < 1 || static_cast<std::uint64_t>(w) * h > (1ull << 31)) {
        throw format_error("bad dimensions " + std::to_string(w) + "x" + std::to_string(h), 8);
    }
    return DicfHeader{channels, static_cast<int>(w), static_cast<int>(h), r};
}

}  // namespace detail

inline std::string encode_dicf(const ScalarField& field) {
    const std::vector<double>* planes[1] = {&field.values};
    return detail::encode_dicf(field.width, field.height, 1, planes);
}

inline std::string encode_dicf(const VectorField2& field) {
    const std::vector<double>* planes[2] = {&field.u, &field.v};
    return detail::encode_dicf(field.width, field.height, 2, planes);
}

inline std::uint16_t dicf_channels(std::string_view bytes) {
    return detail::decode_dicf_header(bytes).channels;
}

inline ScalarField decode_dicf_scalar(std::string_view bytes) {
    auto hdr = detail::decode_dicf_header(bytes);
    if (hdr.channels != 1) {
        throw usage_error("expected a 1-channel field, file has " +
                          std::to_string(hdr.channels));
    }
    ScalarField field(hdr.width, hdr.height);
    hdr.reader.need(field.size() * 8, "payload");
    for (double& v : field.values) v = hdr.reader.f64("payload");
    return field;
}

inline VectorField2 decode_dicf_vector(std::string_view bytes) {
    auto hdr = detail::decode_dicf_header(bytes);
    if (hdr.channels != 2) {
        throw usage_error("expected a 2-channel field, file has " +
                          std::to_string(hdr.channels));
    }
    VectorField2 field(hdr.width, hdr.height);
    hdr.reader.need(field.size() * 16, "payload");
    for (double& v : field.u) v = hdr.reader.f64("payload");
    for (double& v : field.v) v = hdr.reader.f64("payload");
    return field;
}

// ---- CSV -------------------------------------------------------------------

namespace detail {

inline void append_csv_value(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

inline void append_csv_rows(std::string& out, const std::vector<double>& values, int width,
                            int height) {
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (x) out.push_back(',');
            append_csv_value(out, values[static_cast<std::size_t>(y) * width + x]);
        }
        out.push_back('\n');
    }
}

}  // namespace detail

inline std::string encode_csv(const ScalarField& field) {
    std::string out;
    detail::append_csv_rows(out, field.values, field.width, field.height);
    return out;
}

inline std::string encode_csv(const VectorField2& field) {
    std::string out;
    detail::append_csv_rows(out, field.u, field.width, field.height);
    detail::append_csv_rows(out, field.v, field.width, field.height);
    return out;
}

inline ScalarField decode_csv_scalar(std::string_view bytes) {
    std::vector<double> values;
    int width = -1;
    int row = 0;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        std::size_t eol = bytes.find('\n', pos);
        std::string_view line = bytes.substr(pos, eol == std::string_view::npos ? bytes.size() - pos
                                                                                : eol - pos);
        std::size_t next = eol == std::string_view::npos ? bytes.size() : eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) {
            pos = next;
            continue;
        }
        int cols = 0;
        std::size_t cell_start = 0;
        while (cell_start <= line.size()) {
            std::size_t comma = line.find(',', cell_start);
            std::string_view cell =
                line.substr(cell_start, comma == std::string_view::npos ? line.size() - cell_start
                                                                        : comma - cell_start);
            double v = 0.0;
            auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
                throw format_error("bad CSV number in row " + std::to_string(row),
                                   pos + cell_start);
            }
            values.push_back(v);
            ++cols;
            if (comma == std::string_view::npos) break;
            cell_start = comma + 1;
        }
        if (width < 0) {
            width = cols;
        } else if (cols != width) {
            throw format_error("ragged CSV: row " + std::to_string(row) + " has " +
                                   std::to_string(cols) + " columns, expected " +
                                   std::to_string(width),
                               pos);
        }
        ++row;
        pos = next;
    }
    if (width < 1 || row < 1) throw format_error("empty CSV", 0);
    ScalarField field(width, row);
    field.values = std::move(values);
    return field;
}

// ---- File-level API --------------------------------------------------------

inline ScalarField load_image(const std::filesystem::path& path) {
    std::string bytes = detail::read_file_bytes(path);
    const std::string ext = path.extension().string();
    if (ext == ".pgm") return decode_pgm(bytes);
    if (ext == ".dicf") return decode_dicf_scalar(bytes);
    throw usage_error("unsupported image format \"" + ext + "\" for " + path.string() +
                      " (expected .pgm or .dicf)");
}

inline ScalarField load_scalar_field(const std::filesystem::path& path) {
    std::string bytes = detail::read_file_bytes(path);
    const std::string ext = path.extension().string();
    if (ext == ".pgm") return decode_pgm(bytes);
    if (ext == ".dicf") return decode_dicf_scalar(bytes);
    if (ext == ".csv") return decode_csv_scalar(bytes);
    throw usage_error("unsupported field format \"" + ext + "\" for " + path.string());
}

inline VectorField2 load_vector_field(const std::filesystem::path& path) {
    return decode_dicf_vector(detail::read_file_bytes(path));
}

inline void save_field(const ScalarField& field, const std::filesystem::path& path,
                       FieldFormat format) {
    switch (format) {
        case FieldFormat::pgm: detail::write_file_bytes(path, encode_pgm(field)); return;
        case FieldFormat::dicf: detail::write_file_bytes(path, encode_dicf(field)); return;
        case FieldFormat::csv: detail::write_file_bytes(path, encode_csv(field)); return;
    }
}

inline void save_field(const VectorField2& field, const std::filesystem::path& path,
                       FieldFormat format) {
    switch (format) {
        case FieldFormat::pgm:
            throw usage_error("pgm cannot hold a 2-channel field; use dicf or csv");
        case FieldFormat::dicf: detail::write_file_bytes(path, encode_dicf(field)); return;
        case FieldFormat::csv: detail::write_file_bytes(path, encode_csv(field)); return;
    }
}

// Mask source: a PGM where nonzero marks a pixel inside the ROI.
inline RoiMask load_mask(const std::filesystem::path& path) {
    ScalarField img = decode_pgm(detail::read_file_bytes(path));
    RoiMask mask(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) mask.inside[i] = img.values[i] > 0.0 ? 1 : 0;
    if (mask.count_inside() == 0) {
        throw empty_roi_error("mask " + path.string() + " selects no pixels");
    }
    return mask;
}

inline void require_mask_matches(const RoiMask& mask, int width, int height) {
    require_same_shape(mask.width, mask.height, width, height, "mask vs image");
}

}  // namespace pindic
