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

#include <cstddef>
#include <memory>
#include <vector>

#include "mmsret/rng.hpp"

namespace mmsret {

struct AudioClip {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;

  double seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// T x C row-major matrix of per-frame coefficients.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t coeffs = 0;
  std::vector<double> values;
  double window_ms = 20.0;
  double hop_ms = 10.0;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t t, std::size_t c, double fill = 0.0)
      : frames(t), coeffs(c), values(t * c, fill) {}

  double& at(std::size_t t, std::size_t c) { return values[t * coeffs + c]; }
  double at(std::size_t t, std::size_t c) const {
    return values[t * coeffs + c];
  }
  double mean() const;
};

struct AugmentSpec {
  int freq_mask_param = 20;
  int time_mask_param = 40;
  int num_masks = 1;
  bool time_warp = false;

  void validate() const;
};

struct MfccConfig {
  int sample_rate = 16000;
  double window_ms = 20.0;
  double hop_ms = 10.0;
  std::size_t n_mels = 128;
  std::size_t n_coeffs = 128;
  // 1024 keeps every one of 128 HTK mel filters wider than one DFT bin at
  // 16 kHz, so no filter is empty.
  std::size_t n_fft = 1024;
  double log_floor = 1e-10;
  // false emits the log-mel energies without the cosine transform.
  bool apply_dct = true;

  void validate() const;
  std::size_t window_samples() const;
  std::size_t hop_samples() const;
};

/// floor((n - window) / hop) + 1 for n >= window, else 0.
std::size_t frame_count(std::size_t n, std::size_t window, std::size_t hop);

/// Periodic Hann window of the given length.
std::vector<double> hann_window(std::size_t length);

/// Splits the clip into Hann-windowed frames. Throws std::invalid_argument
/// when the clip is shorter than one window.
std::vector<std::vector<double>> frame_signal(const AudioClip& clip,
                                              double window_ms, double hop_ms);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Precomputed mel filterbank and DCT for one configuration. compute() may be
/// called concurrently from several threads.
class MfccExtractor {
 public:
  explicit MfccExtractor(MfccConfig config = {});
  ~MfccExtractor();
  MfccExtractor(MfccExtractor&&) noexcept;
  MfccExtractor& operator=(MfccExtractor&&) noexcept;

  const MfccConfig& config() const { return config_; }

  FeatureMatrix compute(const AudioClip& clip) const;

  /// Mel filterbank energies (pre-log) of every frame, T x n_mels.
  FeatureMatrix mel_energies(const AudioClip& clip) const;

  /// Magnitude spectrum (n_fft / 2 + 1 bins) of one windowed frame.
  std::vector<double> magnitude_spectrum(const std::vector<double>& frame) const;

  /// Weight of DFT bin `bin` in mel filter `band`.
  double filter_weight(std::size_t band, std::size_t bin) const;
  /// Center frequency in Hz of each mel filter.
  const std::vector<double>& center_hz() const { return centers_; }

 private:
  struct Fft;
  MfccConfig config_;
  std::vector<double> window_;
  std::vector<double> filters_;  // n_mels x bins
  std::vector<double> dct_;      // n_coeffs x n_mels
  std::vector<double> centers_;
  std::unique_ptr<Fft> fft_;
};

/// Convenience wrapper over MfccExtractor with default framing at 16 kHz.
FeatureMatrix mfcc(const AudioClip& clip, std::size_t n_coeffs,
                   std::size_t n_mels);

/// Masks num_masks frequency bands of width f ~ U{0..F} and num_masks time
/// spans of width t ~ U{0..Tm} with the mean of the input matrix.
FeatureMatrix spec_augment(const FeatureMatrix& feat, const AugmentSpec& spec,
                           Rng& rng);

enum class CropMode { kTrain, kEval };

/// Crops to target_frames rows (random start in train mode, centered in eval
/// mode) or zero-pads symmetrically, the extra row going after the content.
FeatureMatrix crop_or_pad(const FeatureMatrix& feat, std::size_t target_frames,
                          CropMode mode, Rng& rng);

/// Column means over all frames.
std::vector<double> temporal_mean(const FeatureMatrix& feat);

}  // namespace mmsret
