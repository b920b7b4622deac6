#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "mbrkit/audio.hpp"
#include "mbrkit/error.hpp"
#include "support.hpp"

using namespace mbrkit;

namespace {

void put16(std::string& s, std::uint16_t v) { s.append(reinterpret_cast<const char*>(&v), 2); }
void put32(std::string& s, std::uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }

// Hand-built RIFF header with arbitrary format fields (little-endian host).
std::string wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint16_t bits, std::uint32_t frames) {
  const std::uint32_t block = channels * bits / 8;
  std::string s = "RIFF";
  put32(s, 36 + frames * block);
  s += "WAVEfmt ";
  put32(s, 16);
  put16(s, format);
  put16(s, channels);
  put32(s, 16000);
  put32(s, 16000 * block);
  put16(s, static_cast<std::uint16_t>(block));
  put16(s, bits);
  s += "data";
  put32(s, frames * block);
  s.append(frames * block, '\0');
  return s;
}

AudioBuffer random_buffer(std::mt19937& rng, std::size_t n, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  AudioBuffer b;
  b.samples.resize(n);
  for (auto& x : b.samples) x = d(rng);
  return b;
}

}  // namespace

TEST(Wav, RoundTripOfRepresentableSamples) {
  testutil::TempDir dir;
  AudioBuffer b;
  b.sample_rate = 8000;
  for (int v : {0, 1, -1, 32767, -32768, 1234, -4321}) b.samples.push_back(v / 32768.0);
  EXPECT_EQ(write_wav(dir / "a.wav", b), 0u);
  const auto r = read_wav(dir / "a.wav");
  EXPECT_EQ(r.sample_rate, 8000);
  EXPECT_EQ(r.samples, b.samples);
}

TEST(Wav, ClampingIsCounted) {
  testutil::TempDir dir;
  AudioBuffer b;
  b.samples = {1.5, -2.0, 0.5, 1.0};
  EXPECT_EQ(write_wav(dir / "c.wav", b), 3u);
  const auto r = read_wav(dir / "c.wav");
  EXPECT_EQ(r.samples[0], 32767 / 32768.0);
  EXPECT_EQ(r.samples[1], -1.0);
  EXPECT_EQ(r.samples[2], 0.5);
}

TEST(Wav, RejectsUnsupportedFormats) {
  testutil::TempDir dir;
  testutil::write_file(dir / "ok.wav", wav_bytes(1, 1, 16, 4));
  EXPECT_EQ(read_wav(dir / "ok.wav").size(), 4u);
  testutil::write_file(dir / "stereo.wav", wav_bytes(1, 2, 16, 4));
  EXPECT_THROW(read_wav(dir / "stereo.wav"), Error);
  testutil::write_file(dir / "float.wav", wav_bytes(3, 1, 32, 4));
  EXPECT_THROW(read_wav(dir / "float.wav"), Error);
  testutil::write_file(dir / "u8.wav", wav_bytes(1, 1, 8, 4));
  EXPECT_THROW(read_wav(dir / "u8.wav"), Error);
  testutil::write_file(dir / "junk.wav", "not a wave file at all");
  EXPECT_THROW(read_wav(dir / "junk.wav"), Error);
}

TEST(Mix, AchievesRequestedSnr) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> snr(-10.0, 30.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_buffer(rng, 1000 + rng() % 4000, 0.5);
    const auto n = random_buffer(rng, s.size(), 0.1 + 0.9 * (rng() % 100) / 100.0);
    const double target = snr(rng);
    const auto m = mix_at_snr(s, n, target);
    AudioBuffer scaled = n;
    for (auto& x : scaled.samples) x *= m.gain;
    EXPECT_NEAR(measured_snr_db(s, scaled), target, 1e-6);
    for (std::size_t i = 0; i < s.size(); ++i) ASSERT_EQ(m.mixed.samples[i], s.samples[i] + m.gain * n.samples[i]);
  }
}

TEST(Mix, UnitGainWhenPowersMatchAtZeroDb) {
  AudioBuffer s, n;
  s.samples = {0.25, -0.5, 0.125, 0.75};
  n.samples = {-0.25, 0.5, -0.125, -0.75};
  const auto m = mix_at_snr(s, n, 0.0);
  EXPECT_EQ(m.gain, 1.0);
  for (double x : m.mixed.samples) EXPECT_EQ(x, 0.0);
}

TEST(Mix, UndefinedAndInvalidInputs) {
  AudioBuffer s, n;
  s.samples = {0.0, 0.0};
  n.samples = {0.1, 0.2};
  EXPECT_THROW(mix_at_snr(s, n, 5.0), UndefinedError);
  EXPECT_THROW(mix_at_snr(n, s, 5.0), UndefinedError);
  AudioBuffer shorter;
  shorter.samples = {0.1};
  EXPECT_THROW(mix_at_snr(n, shorter, 5.0), ValidationError);
  EXPECT_THROW(mix_at_snr(n, n, NAN), ValidationError);
  EXPECT_THROW(signal_power(AudioBuffer{}), UndefinedError);
}

TEST(FitLength, CropsAndTiles) {
  AudioBuffer noise;
  for (int i = 0; i < 10; ++i) noise.samples.push_back(i);
  Rng rng(3);
  const auto cropped = fit_length(noise, 4, rng);
  ASSERT_EQ(cropped.size(), 4u);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(cropped.samples[i], cropped.samples[0] + static_cast<double>(i));
  const auto tiled = fit_length(noise, 25, rng);
  ASSERT_EQ(tiled.size(), 25u);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(tiled.samples[i], static_cast<double>(i % 10));
  EXPECT_THROW(fit_length(AudioBuffer{}, 3, rng), ValidationError);
}
