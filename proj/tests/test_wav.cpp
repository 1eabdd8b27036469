#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "sediff/errors.hpp"
#include "sediff/rng.hpp"
#include "sediff/wav.hpp"

using namespace sediff;
using sediff::testing::TempDir;

namespace {

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    return x;
}

void append_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), 4);
}

void append_u16(std::string& out, std::uint16_t v) {
    out.append(reinterpret_cast<const char*>(&v), 2);
}

}  // namespace

TEST_SUITE("wav") {

TEST_CASE("float32 round trip preserves samples to single precision") {
    TempDir dir("wavf32");
    const std::string path = dir.file("x.wav");
    Audio audio;
    audio.sample_rate = 16000;
    audio.channels = {random_signal(1000, 1)};
    write_wav(path, audio);

    const Audio back = read_wav(path);
    CHECK(back.sample_rate == 16000);
    REQUIRE(back.mono());
    REQUIRE(back.length() == 1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        CHECK(std::abs(back.channels[0][i] - audio.channels[0][i]) <= 1e-7);
    }
}

TEST_CASE("pcm16 round trip is within one quantization step") {
    TempDir dir("wavpcm");
    const std::string path = dir.file("x.wav");
    Audio audio;
    audio.channels = {random_signal(500, 2)};
    audio.channels[0][0] = 1.0;
    audio.channels[0][1] = -1.0;
    audio.channels[0][2] = 1.5;  // clipped on write
    write_wav(path, audio, WavFormat::Pcm16);

    const Audio back = read_wav(path);
    REQUIRE(back.length() == 500);
    for (std::size_t i = 3; i < 500; ++i) {
        CHECK(std::abs(back.channels[0][i] - audio.channels[0][i]) <= 1e-4);
    }
    CHECK(std::abs(back.channels[0][0] - 1.0) <= 1e-4);
    CHECK(std::abs(back.channels[0][1] + 1.0) <= 1e-4);
    CHECK(back.channels[0][2] <= 1.0);
    CHECK(back.channels[0][2] >= 0.9999);
}

TEST_CASE("stereo round trip and downmix") {
    TempDir dir("wavst");
    const std::string path = dir.file("st.wav");
    Audio audio;
    audio.sample_rate = 48000;
    audio.channels = {random_signal(256, 3), random_signal(256, 4)};
    write_wav(path, audio);

    const Audio back = read_wav(path);
    CHECK(back.sample_rate == 48000);
    REQUIRE(back.stereo());
    for (std::size_t ch = 0; ch < 2; ++ch) {
        for (std::size_t i = 0; i < 256; ++i) {
            CHECK(std::abs(back.channels[ch][i] - audio.channels[ch][i]) <= 1e-7);
        }
    }

    const std::vector<double> mono = downmix(back);
    for (std::size_t i = 0; i < 256; ++i) {
        CHECK(mono[i] == 0.5 * (back.channels[0][i] + back.channels[1][i]));
    }

    // Mono downmix is the identity.
    Audio m;
    m.channels = {random_signal(8, 5)};
    CHECK(downmix(m) == m.channels[0]);
}

TEST_CASE("malformed inputs raise data errors") {
    TempDir dir("wavbad");
    CHECK_THROWS_AS(read_wav(dir.file("missing.wav")), DataError);

    const std::string garbage = dir.file("garbage.wav");
    std::ofstream(garbage, std::ios::binary) << "this is not a wav file at all";
    CHECK_THROWS_AS(read_wav(garbage), DataError);

    Audio bad;
    CHECK_THROWS_AS(write_wav(dir.file("none.wav"), bad), ArgumentError);
    bad.channels = {std::vector<double>(4, 0.0), std::vector<double>(5, 0.0)};
    CHECK_THROWS_AS(write_wav(dir.file("mismatch.wav"), bad), DimensionError);
}

TEST_CASE("reader skips unknown chunks and honors word alignment") {
    // Hand-built file: an odd-sized JUNK chunk (with pad byte) precedes fmt
    // and data. PCM16 mono, two samples.
    std::string body;
    body.append("WAVE");
    body.append("JUNK");
    append_u32(body, 3);
    body.append("abc");
    body.push_back('\0');  // alignment pad, not part of the chunk size
    body.append("fmt ");
    append_u32(body, 16);
    append_u16(body, 1);   // PCM
    append_u16(body, 1);   // mono
    append_u32(body, 16000);
    append_u32(body, 32000);
    append_u16(body, 2);
    append_u16(body, 16);
    body.append("data");
    append_u32(body, 4);
    const std::int16_t s0 = 16384, s1 = -8192;
    body.append(reinterpret_cast<const char*>(&s0), 2);
    body.append(reinterpret_cast<const char*>(&s1), 2);

    std::string file = "RIFF";
    append_u32(file, static_cast<std::uint32_t>(body.size()));
    file += body;

    TempDir dir("wavjunk");
    const std::string path = dir.file("junk.wav");
    std::ofstream(path, std::ios::binary).write(file.data(), static_cast<std::streamsize>(file.size()));

    const Audio audio = read_wav(path);
    CHECK(audio.sample_rate == 16000);
    REQUIRE(audio.mono());
    REQUIRE(audio.length() == 2);
    CHECK(audio.channels[0][0] == 16384.0 / 32768.0);
    CHECK(audio.channels[0][1] == -8192.0 / 32768.0);
}

}  // TEST_SUITE
