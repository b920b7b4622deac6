#include "mbrkit/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mbrkit/error.hpp"

namespace mbrkit {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xfffe;

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 || std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    throw Error(name + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  AudioBuffer buffer;
  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const unsigned char* chunk = data.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = std::min<std::size_t>(size, data.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (available < 16) throw Error(name + ": truncated fmt chunk");
      const unsigned char* f = data.data() + body;
      std::uint16_t format = read_u16(f);
      const std::uint16_t channels = read_u16(f + 2);
      const std::uint32_t rate = read_u32(f + 4);
      const std::uint16_t bits = read_u16(f + 14);
      if (format == kFormatExtensible && available >= 26) format = read_u16(f + 24);
      if (format != kFormatPcm) throw Error(name + ": unsupported WAV format tag " + std::to_string(format) + " (PCM required)");
      if (channels != 1) throw Error(name + ": " + std::to_string(channels) + " channels; only mono audio is supported");
      if (bits != 16) throw Error(name + ": " + std::to_string(bits) + "-bit samples; only 16-bit PCM is supported");
      if (rate == 0) throw Error(name + ": sample rate is zero");
      buffer.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw Error(name + ": data chunk before fmt chunk");
      const std::size_t count = available / 2;
      buffer.samples.resize(count);
      const unsigned char* s = data.data() + body;
      for (std::size_t i = 0; i < count; ++i)
        buffer.samples[i] = static_cast<std::int16_t>(read_u16(s + 2 * i)) / 32768.0;
      return buffer;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw Error(name + ": missing fmt chunk");
  throw Error(name + ": missing data chunk");
}

std::size_t write_wav(const std::filesystem::path& path, const AudioBuffer& buffer) {
  if (buffer.sample_rate <= 0) throw ValidationError("sample rate must be positive");
  constexpr double kMax = 1.0 - 1.0 / 32768.0;
  std::size_t clipped = 0;
  std::string pcm;
  pcm.reserve(buffer.samples.size() * 2);
  for (double s : buffer.samples) {
    if (!std::isfinite(s)) throw ValidationError("cannot write non-finite samples");
    if (s < -1.0 || s > kMax) ++clipped;
    const double c = std::clamp(s, -1.0, kMax);
    put_u16(pcm, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::trunc(c * 32768.0))));
  }
  std::string out;
  out.reserve(44 + pcm.size());
  out += "RIFF";
  put_u32(out, static_cast<std::uint32_t>(36 + pcm.size()));
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, static_cast<std::uint32_t>(pcm.size()));
  out += pcm;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("write failure on " + path.string());
  return clipped;
}

double signal_power(const AudioBuffer& buffer) {
  if (buffer.samples.empty()) throw UndefinedError("power of an empty buffer is undefined");
  double sum = 0.0;
  for (double s : buffer.samples) sum += s * s;
  return sum / static_cast<double>(buffer.samples.size());
}

AudioBuffer fit_length(const AudioBuffer& noise, std::size_t target_len, Rng& rng) {
  if (noise.samples.empty()) throw ValidationError("noise buffer is empty");
  if (target_len == 0) throw ValidationError("target length must be positive");
  AudioBuffer out;
  out.sample_rate = noise.sample_rate;
  out.samples.resize(target_len);
  const std::size_t len = noise.samples.size();
  if (len >= target_len) {
    const std::size_t offset = static_cast<std::size_t>(rng.below(len - target_len + 1));
    std::copy_n(noise.samples.begin() + static_cast<std::ptrdiff_t>(offset), target_len, out.samples.begin());
  } else {
    for (std::size_t i = 0; i < target_len; ++i) out.samples[i] = noise.samples[i % len];
  }
  return out;
}

MixResult mix_at_snr(const AudioBuffer& signal, const AudioBuffer& noise, double snr_db) {
  if (!std::isfinite(snr_db)) throw ValidationError("SNR must be finite");
  if (signal.size() != noise.size())
    throw ValidationError("signal and noise lengths differ (" + std::to_string(signal.size()) + " vs " +
                          std::to_string(noise.size()) + ")");
  if (signal.sample_rate != noise.sample_rate) throw ValidationError("signal and noise sample rates differ");
  const double ps = signal_power(signal);
  const double pn = signal_power(noise);
  if (ps <= 0.0) throw UndefinedError("signal has zero power");
  if (pn <= 0.0) throw UndefinedError("noise has zero power");
  MixResult r;
  r.gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  r.mixed.sample_rate = signal.sample_rate;
  r.mixed.samples.resize(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) r.mixed.samples[i] = signal.samples[i] + r.gain * noise.samples[i];
  return r;
}

double measured_snr_db(const AudioBuffer& signal, const AudioBuffer& noise) {
  return 10.0 * std::log10(signal_power(signal) / signal_power(noise));
}

}  // namespace mbrkit
