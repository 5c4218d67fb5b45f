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

#pragma once

#include <filesystem>
#include <vector>

#include "mmsret/audio.hpp"

namespace mmsret {

// Mono 16-bit linear PCM, little-endian RIFF/WAVE.
AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// Headerless little-endian float32 samples.
AudioClip read_raw_f32(const std::filesystem::path& path, int sample_rate);
void write_raw_f32(const std::filesystem::path& path, const AudioClip& clip);

// Flat feature file: 'FEAT', version, T, C as little-endian u32, then T*C
// row-major float32 values. Also used for visual-side vectors (T = 1).
inline constexpr std::uint32_t kFeatureFileVersion = 1;
std::vector<std::uint8_t> encode_features(const FeatureMatrix& feat);
FeatureMatrix decode_features(const std::vector<std::uint8_t>& bytes);
void write_features(const std::filesystem::path& path, const FeatureMatrix& feat);
FeatureMatrix read_features(const std::filesystem::path& path);

}  // namespace mmsret
