#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sediff {

// In-memory audio: one vector per channel, all the same length.
struct Audio {
    std::vector<std::vector<double>> channels;
    std::size_t sample_rate = 16000;

    std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
    bool mono() const { return channels.size() == 1; }
    bool stereo() const { return channels.size() == 2; }
};

enum class WavFormat { Pcm16, Float32 };

// Minimal RIFF/WAVE reader: PCM16 and IEEE float32, mono or stereo.
// Throws DataError on anything malformed or unsupported.
Audio read_wav(const std::string& path);

// Writer; everything this project produces is written as float32.
void write_wav(const std::string& path, const Audio& audio,
               WavFormat format = WavFormat::Float32);

// Channel average (stereo -> mono); identity for mono input.
std::vector<double> downmix(const Audio& audio);

}  // namespace sediff
