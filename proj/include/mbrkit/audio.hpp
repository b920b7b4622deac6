#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mbrkit/rng.hpp"

namespace mbrkit {

struct AudioBuffer {
  std::vector<double> samples;  // nominally in [-1, 1]
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
};

/// RIFF/WAVE, PCM signed 16-bit, mono. Anything else is rejected.
AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes PCM 16-bit mono. Samples are clamped to [-1, 1 - 2^-15] and
/// truncated toward zero after scaling by 32768. Returns the number of
/// samples that had to be clamped.
std::size_t write_wav(const std::filesystem::path& path, const AudioBuffer& buffer);

/// Mean square of the samples.
double signal_power(const AudioBuffer& buffer);

/// Crops (random offset) or tiles (then crops from 0) the noise to target_len.
AudioBuffer fit_length(const AudioBuffer& noise, std::size_t target_len, Rng& rng);

struct MixResult {
  AudioBuffer mixed;
  double gain = 0.0;  // applied to the noise
};

/// signal + g * noise with g chosen so that 10 log10(P_signal / P_{g*noise})
/// equals snr_db. No clamping is applied.
MixResult mix_at_snr(const AudioBuffer& signal, const AudioBuffer& noise, double snr_db);

/// 10 log10(P_signal / P_noise).
double measured_snr_db(const AudioBuffer& signal, const AudioBuffer& noise);

}  // namespace mbrkit
