// Copyright 2026 The mmsret Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mmsret/audio_io.hpp"

#include <algorithm>
#include <cmath>

#include "mmsret/binary_io.hpp"

namespace mmsret {

AudioClip read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, path.string());
  r.expect_tag("RIFF");
  r.u32();
  r.expect_tag("WAVE");

  bool have_fmt = false;
  AudioClip clip;
  while (r.remaining() >= 8) {
    const std::size_t tag_pos = r.position();
    std::string tag(reinterpret_cast<const char*>(bytes.data() + tag_pos), 4);
    r.skip(4);
    const std::uint32_t size = r.u32();
    if (tag == "fmt ") {
      if (size < 16) throw FormatError(path.string() + ": short fmt chunk");
      const std::uint16_t format = r.u16();
      const std::uint16_t channels = r.u16();
      const std::uint32_t rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      const std::uint16_t bits = r.u16();
      if (format != 1 || channels != 1 || bits != 16) {
        throw FormatError(path.string() +
                          ": only mono 16-bit PCM WAV is supported");
      }
      clip.sample_rate = static_cast<int>(rate);
      r.skip(size - 16);
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw FormatError(path.string() + ": data before fmt");
      if (size % 2 != 0 || size > r.remaining()) {
        throw FormatError(path.string() + ": bad data chunk size");
      }
      clip.samples.resize(size / 2);
      for (double& s : clip.samples) s = r.i16() / 32768.0;
      return clip;
    } else {
      r.skip(size + (size & 1));
    }
  }
  throw FormatError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  ByteWriter w;
  w.tag("RIFF");
  w.u32(36 + 2 * n);
  w.tag("WAVE");
  w.tag("fmt ");
  w.u32(16);
  w.u16(1);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(clip.sample_rate));
  w.u32(static_cast<std::uint32_t>(clip.sample_rate) * 2);
  w.u16(2);
  w.u16(16);
  w.tag("data");
  w.u32(2 * n);
  for (double s : clip.samples) {
    // Inverse of read_wav's i / 32768, so samples on that grid round-trip.
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    w.i16(static_cast<std::int16_t>(scaled));
  }
  write_file_bytes(path, w.bytes());
}

AudioClip read_raw_f32(const std::filesystem::path& path, int sample_rate) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() % 4 != 0) {
    throw FormatError(path.string() + ": size is not a multiple of 4");
  }
  ByteReader r(bytes, path.string());
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(bytes.size() / 4);
  for (double& s : clip.samples) s = r.f32();
  return clip;
}

void write_raw_f32(const std::filesystem::path& path, const AudioClip& clip) {
  ByteWriter w;
  for (double s : clip.samples) w.f32(static_cast<float>(s));
  write_file_bytes(path, w.bytes());
}

std::vector<std::uint8_t> encode_features(const FeatureMatrix& feat) {
  ByteWriter w;
  w.tag("FEAT");
  w.u32(kFeatureFileVersion);
  w.u32(static_cast<std::uint32_t>(feat.frames));
  w.u32(static_cast<std::uint32_t>(feat.coeffs));
  for (double v : feat.values) w.f32(static_cast<float>(v));
  return w.bytes();
}

FeatureMatrix decode_features(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "feature file");
  r.expect_tag("FEAT");
  const std::uint32_t version = r.u32();
  if (version != kFeatureFileVersion) {
    throw FormatError("feature file: unsupported version " +
                      std::to_string(version));
  }
  const std::uint32_t t = r.u32();
  const std::uint32_t c = r.u32();
  if (r.remaining() != static_cast<std::size_t>(t) * c * 4) {
    throw FormatError("feature file: payload size does not match header");
  }
  FeatureMatrix feat(t, c);
  for (double& v : feat.values) v = r.f32();
  return feat;
}

void write_features(const std::filesystem::path& path,
                    const FeatureMatrix& feat) {
  write_file_bytes(path, encode_features(feat));
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  return decode_features(read_file_bytes(path));
}

}  // namespace mmsret
