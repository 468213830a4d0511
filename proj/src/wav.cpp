#include "framediff/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace framediff {

namespace {

struct ChunkHeader {
    char id[4];
    std::uint32_t size;
};

std::uint32_t rd_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t rd_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(unsigned char* p, std::uint32_t v) {
    p[0] = static_cast<unsigned char>(v & 0xff);
    p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
    p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
    p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

void wr_u16(unsigned char* p, std::uint16_t v) {
    p[0] = static_cast<unsigned char>(v & 0xff);
    p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
}

}  // namespace

WavData read_wav(const std::string& path, int expected_rate_hz) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("read_wav: cannot open " + path);

    unsigned char riff[12];
    if (!f.read(reinterpret_cast<char*>(riff), 12) || std::memcmp(riff, "RIFF", 4) != 0 ||
        std::memcmp(riff + 8, "WAVE", 4) != 0)
        throw InputError("read_wav: not a RIFF/WAVE file: " + path);

    int format = 0, channels = 0, bits = 0, rate = 0;
    bool have_fmt = false;
    std::vector<unsigned char> payload;
    bool have_data = false;

    unsigned char ch[8];
    while (f.read(reinterpret_cast<char*>(ch), 8)) {
        std::uint32_t size = rd_u32(ch + 4);
        if (std::memcmp(ch, "fmt ", 4) == 0) {
            std::vector<unsigned char> body(size);
            if (!f.read(reinterpret_cast<char*>(body.data()), size) || size < 16)
                throw InputError("read_wav: truncated fmt chunk: " + path);
            format = rd_u16(body.data());
            channels = rd_u16(body.data() + 2);
            rate = static_cast<int>(rd_u32(body.data() + 4));
            bits = rd_u16(body.data() + 14);
            have_fmt = true;
        } else if (std::memcmp(ch, "data", 4) == 0) {
            payload.resize(size);
            if (!f.read(reinterpret_cast<char*>(payload.data()), size))
                throw InputError("read_wav: truncated data chunk: " + path);
            have_data = true;
        } else {
            f.seekg(size + (size & 1), std::ios::cur);
            continue;
        }
        if (size & 1) f.seekg(1, std::ios::cur);
        if (have_fmt && have_data) break;
    }
    if (!have_fmt || !have_data) throw InputError("read_wav: missing fmt or data chunk: " + path);
    if (channels != 1) throw InputError("read_wav: expected mono, got " + std::to_string(channels) + " channels: " + path);
    if (expected_rate_hz > 0 && rate != expected_rate_hz)
        throw InputError("read_wav: sample rate " + std::to_string(rate) + " Hz, expected " +
                         std::to_string(expected_rate_hz) + " Hz: " + path);

    WavData out;
    out.sample_rate_hz = rate;
    if (format == 1 && bits == 16) {
        std::size_t n = payload.size() / 2;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::int16_t v = static_cast<std::int16_t>(rd_u16(payload.data() + 2 * i));
            out.samples[i] = static_cast<double>(v) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        std::size_t n = payload.size() / 4;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t u = rd_u32(payload.data() + 4 * i);
            float v;
            std::memcpy(&v, &u, 4);
            out.samples[i] = static_cast<double>(v);
        }
    } else {
        throw InputError("read_wav: unsupported format (need 16-bit PCM or 32-bit float): " + path);
    }
    return out;
}

namespace {

void fill_header(unsigned char* h, std::uint32_t data_bytes, int rate) {
    std::memcpy(h, "RIFF", 4);
    wr_u32(h + 4, 36 + data_bytes);
    std::memcpy(h + 8, "WAVE", 4);
    std::memcpy(h + 12, "fmt ", 4);
    wr_u32(h + 16, 16);
    wr_u16(h + 20, 1);   // PCM
    wr_u16(h + 22, 1);   // mono
    wr_u32(h + 24, static_cast<std::uint32_t>(rate));
    wr_u32(h + 28, static_cast<std::uint32_t>(rate) * 2);
    wr_u16(h + 32, 2);
    wr_u16(h + 34, 16);
    std::memcpy(h + 36, "data", 4);
    wr_u32(h + 40, data_bytes);
}

std::int16_t to_i16(double x) {
    double c = std::clamp(x, -1.0, 1.0);
    return static_cast<std::int16_t>(std::lround(c * 32767.0));
}

}  // namespace

void write_wav(const std::string& path, Span samples, int sample_rate_hz) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ResourceError("write_wav: cannot open " + path + " for writing");
    unsigned char header[44];
    fill_header(header, static_cast<std::uint32_t>(samples.size() * 2), sample_rate_hz);
    f.write(reinterpret_cast<char*>(header), 44);
    std::vector<unsigned char> buf(samples.size() * 2);
    for (std::size_t i = 0; i < samples.size(); ++i)
        wr_u16(buf.data() + 2 * i, static_cast<std::uint16_t>(to_i16(samples[i])));
    f.write(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw ResourceError("write_wav: short write to " + path);
}

WavFileSink::WavFileSink(const std::string& path, int sample_rate_hz) : path_(path) {
    f_ = std::fopen(path.c_str(), "wb");
    if (!f_) throw ResourceError("WavFileSink: cannot open " + path + " for writing");
    unsigned char header[44];
    fill_header(header, 0, sample_rate_hz);
    if (std::fwrite(header, 1, 44, f_) != 44) throw ResourceError("WavFileSink: short write to " + path);
}

WavFileSink::~WavFileSink() {
    if (f_) close();
}

void WavFileSink::write(Span samples) {
    if (!f_) throw ResourceError("WavFileSink: sink already closed: " + path_);
    unsigned char buf[512];
    std::size_t i = 0;
    while (i < samples.size()) {
        std::size_t n = std::min<std::size_t>(256, samples.size() - i);
        for (std::size_t j = 0; j < n; ++j)
            wr_u16(buf + 2 * j, static_cast<std::uint16_t>(to_i16(samples[i + j])));
        if (std::fwrite(buf, 2, n, f_) != n) throw ResourceError("WavFileSink: short write to " + path_);
        i += n;
    }
    count_ += samples.size();
}

void WavFileSink::close() {
    if (!f_) return;
    std::uint32_t data_bytes = static_cast<std::uint32_t>(count_ * 2);
    unsigned char u32[4];
    wr_u32(u32, 36 + data_bytes);
    std::fseek(f_, 4, SEEK_SET);
    std::fwrite(u32, 1, 4, f_);
    wr_u32(u32, data_bytes);
    std::fseek(f_, 40, SEEK_SET);
    std::fwrite(u32, 1, 4, f_);
    std::fclose(f_);
    f_ = nullptr;
}

}  // namespace framediff
