// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dereverb/dsp/waveform.hpp"

namespace dereverb {

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}
inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

/// Reads a mono RIFF WAV holding 16-bit PCM or 32-bit IEEE float samples.
/// The sample rate is reported as stored; callers decide whether to accept it.
inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw IoError(path.string() + ": not a RIFF/WAVE file");
  std::size_t pos = 12;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t size = detail::read_u32(&buf[pos + 4]);
    const unsigned char* body = &buf[pos + 8];
    if (pos + 8 + size > buf.size()) throw IoError(path.string() + ": truncated chunk");
    if (std::memcmp(&buf[pos], "fmt ", 4) == 0) {
      if (size < 16) throw IoError(path.string() + ": short fmt chunk");
      format = detail::read_u16(body);
      channels = detail::read_u16(body + 2);
      rate = detail::read_u32(body + 4);
      bits = detail::read_u16(body + 14);
      if (format == 0xFFFE && size >= 26) format = detail::read_u16(body + 24);
      have_fmt = true;
    } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
      if (!have_fmt) throw IoError(path.string() + ": data before fmt");
      if (channels != 1) throw IoError(path.string() + ": only mono audio is supported");
      Waveform w;
      w.sample_rate_hz = static_cast<int>(rate);
      if (format == 1 && bits == 16) {
        w.samples.resize(size / 2);
        for (std::size_t i = 0; i < w.samples.size(); ++i)
          w.samples[i] = static_cast<std::int16_t>(detail::read_u16(body + 2 * i)) / 32768.0;
      } else if (format == 3 && bits == 32) {
        w.samples.resize(size / 4);
        for (std::size_t i = 0; i < w.samples.size(); ++i) {
          const std::uint32_t u = detail::read_u32(body + 4 * i);
          float f;
          std::memcpy(&f, &u, 4);
          w.samples[i] = f;
        }
      } else {
        throw IoError(path.string() + ": unsupported sample format");
      }
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  throw IoError(path.string() + ": no data chunk");
}

/// Writes 32-bit float mono WAV.
inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::string out;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.size() * 4);
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 3);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 4);
  detail::put_u16(out, 4);
  detail::put_u16(out, 32);
  out += "data";
  detail::put_u32(out, data_bytes);
  for (double s : w.samples) {
    const float f = static_cast<float>(s);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    detail::put_u32(out, u);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

/// Writes 16-bit PCM mono WAV (clipped to [-1, 1]).
inline void write_wav_pcm16(const std::filesystem::path& path, const Waveform& w) {
  std::string out;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.size() * 2);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  detail::put_u16(out, 2);
  detail::put_u16(out, 16);
  out += "data";
  detail::put_u32(out, data_bytes);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
    detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace dereverb
