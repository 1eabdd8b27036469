#include "sediff/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sediff/errors.hpp"

namespace sediff {

namespace {

static_assert(std::endian::native == std::endian::little,
              "wav io assumes a little-endian host");

std::uint32_t read_u32(const std::vector<char>& buf, std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    return v;
}

std::uint16_t read_u16(const std::vector<char>& buf, std::size_t off) {
    std::uint16_t v;
    std::memcpy(&v, buf.data() + off, 2);
    return v;
}

void append_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), 4);
}

void append_u16(std::string& out, std::uint16_t v) {
    out.append(reinterpret_cast<const char*>(&v), 2);
}

}  // namespace

Audio read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read_wav: cannot open " + path);
    std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
        throw DataError("read_wav: not a RIFF/WAVE file: " + path);
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t data_off = 0, data_len = 0;
    bool have_fmt = false, have_data = false;

    std::size_t off = 12;
    while (off + 8 <= buf.size()) {
        char id[5] = {0};
        std::memcpy(id, buf.data() + off, 4);
        const std::uint32_t size = read_u32(buf, off + 4);
        const std::size_t body = off + 8;
        if (body + size > buf.size()) {
            throw DataError("read_wav: truncated chunk '" + std::string(id) + "' in " + path);
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw DataError("read_wav: fmt chunk too small in " + path);
            format = read_u16(buf, body + 0);
            channels = read_u16(buf, body + 2);
            rate = read_u32(buf, body + 4);
            bits = read_u16(buf, body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = body;
            data_len = size;
            have_data = true;
        }
        off = body + size + (size & 1);  // chunks are word-aligned
    }

    if (!have_fmt || !have_data) throw DataError("read_wav: missing fmt/data chunk in " + path);
    if (channels < 1 || channels > 2) {
        throw DataError("read_wav: unsupported channel count " + std::to_string(channels) +
                        " in " + path);
    }
    const bool pcm16 = format == 1 && bits == 16;
    const bool float32 = format == 3 && bits == 32;
    if (!pcm16 && !float32) {
        throw DataError("read_wav: unsupported encoding (format " + std::to_string(format) +
                        ", " + std::to_string(bits) + " bit) in " + path);
    }
    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    if (frame_bytes == 0 || data_len % frame_bytes != 0) {
        throw DataError("read_wav: data size not a whole number of frames in " + path);
    }
    const std::size_t n = data_len / frame_bytes;

    Audio audio;
    audio.sample_rate = rate;
    audio.channels.assign(channels, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const std::size_t p = data_off + (i * channels + ch) * bytes_per_sample;
            if (pcm16) {
                std::int16_t v;
                std::memcpy(&v, buf.data() + p, 2);
                audio.channels[ch][i] = static_cast<double>(v) / 32768.0;
            } else {
                float v;
                std::memcpy(&v, buf.data() + p, 4);
                audio.channels[ch][i] = static_cast<double>(v);
            }
        }
    }
    return audio;
}

void write_wav(const std::string& path, const Audio& audio, WavFormat format) {
    if (audio.channels.empty() || audio.channels.size() > 2) {
        throw ArgumentError("write_wav: need 1 or 2 channels");
    }
    const std::size_t n = audio.length();
    for (const auto& ch : audio.channels) {
        if (ch.size() != n) throw DimensionError("write_wav: channel length mismatch");
    }
    const std::uint16_t channels = static_cast<std::uint16_t>(audio.channels.size());
    const bool pcm16 = format == WavFormat::Pcm16;
    const std::uint16_t bits = pcm16 ? 16 : 32;
    const std::uint16_t block = static_cast<std::uint16_t>(channels * bits / 8);
    const std::uint32_t data_len = static_cast<std::uint32_t>(n * block);

    std::string out;
    out.reserve(44 + data_len);
    out.append("RIFF");
    append_u32(out, 36 + data_len);
    out.append("WAVE");
    out.append("fmt ");
    append_u32(out, 16);
    append_u16(out, pcm16 ? 1 : 3);
    append_u16(out, channels);
    append_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
    append_u32(out, static_cast<std::uint32_t>(audio.sample_rate) * block);
    append_u16(out, block);
    append_u16(out, bits);
    out.append("data");
    append_u32(out, data_len);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const double v = audio.channels[ch][i];
            if (pcm16) {
                const double clamped = std::clamp(v, -1.0, 1.0);
                const auto q = static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
                out.append(reinterpret_cast<const char*>(&q), 2);
            } else {
                const float f = static_cast<float>(v);
                out.append(reinterpret_cast<const char*>(&f), 4);
            }
        }
    }

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("write_wav: cannot open " + path + " for writing");
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw DataError("write_wav: write failed for " + path);
}

std::vector<double> downmix(const Audio& audio) {
    if (audio.channels.empty()) throw ArgumentError("downmix: no channels");
    if (audio.mono()) return audio.channels.front();
    const std::size_t n = audio.length();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = 0.5 * (audio.channels[0][i] + audio.channels[1][i]);
    }
    return out;
}

}  // namespace sediff
