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

#include "mmsret/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mmsret {

namespace {

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t ms_to_samples(double ms, int rate) {
  return static_cast<std::size_t>(std::llround(ms * rate / 1000.0));
}

}  // namespace

struct MfccExtractor::Fft {
  std::size_t n;
  fftw_plan plan = nullptr;

  explicit Fft(std::size_t size) : n(size) {
    std::lock_guard lock(planner_mutex());
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    // FFTW_ESTIMATE never times candidate algorithms, so results are
    // bit-reproducible between runs.
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    if (!plan) throw std::runtime_error("fftw planning failed");
  }
  ~Fft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
};

double FeatureMatrix::mean() const {
  if (values.empty()) return 0.0;
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

void AugmentSpec::validate() const {
  if (freq_mask_param < 0 || time_mask_param < 0 || num_masks < 0) {
    throw std::invalid_argument("augment parameters must be non-negative");
  }
  if (time_warp) throw std::invalid_argument("time warping is not supported");
}

void MfccConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be > 0");
  if (window_ms <= 0 || hop_ms <= 0) {
    throw std::invalid_argument("window and hop must be positive");
  }
  if (n_mels == 0 || n_coeffs == 0) {
    throw std::invalid_argument("n_mels and n_coeffs must be positive");
  }
  if (n_coeffs > n_mels) {
    throw std::invalid_argument("n_coeffs (" + std::to_string(n_coeffs) +
                                ") exceeds n_mels (" + std::to_string(n_mels) +
                                ")");
  }
  if (!apply_dct && n_coeffs != n_mels) {
    throw std::invalid_argument("without the DCT n_coeffs must equal n_mels");
  }
  if (n_fft < window_samples()) {
    throw std::invalid_argument("n_fft shorter than the analysis window");
  }
  if (hop_samples() == 0 || window_samples() == 0) {
    throw std::invalid_argument("window/hop shorter than one sample");
  }
}

std::size_t MfccConfig::window_samples() const {
  return ms_to_samples(window_ms, sample_rate);
}

std::size_t MfccConfig::hop_samples() const {
  return ms_to_samples(hop_ms, sample_rate);
}

std::size_t frame_count(std::size_t n, std::size_t window, std::size_t hop) {
  if (n < window || window == 0 || hop == 0) return 0;
  return (n - window) / hop + 1;
}

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t i = 0; i < length; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(length));
  }
  return w;
}

std::vector<std::vector<double>> frame_signal(const AudioClip& clip,
                                              double window_ms, double hop_ms) {
  if (clip.sample_rate <= 0) {
    throw std::invalid_argument("clip has non-positive sample rate");
  }
  const std::size_t window = ms_to_samples(window_ms, clip.sample_rate);
  const std::size_t hop = ms_to_samples(hop_ms, clip.sample_rate);
  if (window == 0 || hop == 0) {
    throw std::invalid_argument("window/hop shorter than one sample");
  }
  if (clip.samples.size() < window) {
    throw std::invalid_argument(
        "clip has " + std::to_string(clip.samples.size()) +
        " samples, shorter than one " + std::to_string(window) +
        "-sample window; pad the clip first");
  }
  const std::vector<double> w = hann_window(window);
  const std::size_t count = frame_count(clip.samples.size(), window, hop);
  std::vector<std::vector<double>> frames(count, std::vector<double>(window));
  for (std::size_t f = 0; f < count; ++f) {
    const double* src = clip.samples.data() + f * hop;
    for (std::size_t i = 0; i < window; ++i) frames[f][i] = src[i] * w[i];
  }
  return frames;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

MfccExtractor::MfccExtractor(MfccConfig config) : config_(config) {
  config_.validate();
  window_ = hann_window(config_.window_samples());
  fft_ = std::make_unique<Fft>(config_.n_fft);

  const std::size_t bins = config_.n_fft / 2 + 1;
  const std::size_t mels = config_.n_mels;
  const double nyquist = config_.sample_rate / 2.0;
  const double mel_hi = hz_to_mel(nyquist);
  std::vector<double> edges(mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) /
                         static_cast<double>(mels + 1));
  }
  centers_.assign(edges.begin() + 1, edges.end() - 1);

  filters_.assign(mels * bins, 0.0);
  for (std::size_t m = 0; m < mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config_.sample_rate /
                       static_cast<double>(config_.n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      filters_[m * bins + k] = w;
    }
  }

  // Orthonormal DCT-II rows.
  dct_.assign(config_.n_coeffs * mels, 0.0);
  for (std::size_t k = 0; k < config_.n_coeffs; ++k) {
    const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(mels));
    for (std::size_t m = 0; m < mels; ++m) {
      dct_[k * mels + m] =
          s * std::cos(std::numbers::pi * static_cast<double>(k) *
                       (static_cast<double>(m) + 0.5) / static_cast<double>(mels));
    }
  }
}

MfccExtractor::~MfccExtractor() = default;
MfccExtractor::MfccExtractor(MfccExtractor&&) noexcept = default;
MfccExtractor& MfccExtractor::operator=(MfccExtractor&&) noexcept = default;

double MfccExtractor::filter_weight(std::size_t band, std::size_t bin) const {
  return filters_.at(band * (config_.n_fft / 2 + 1) + bin);
}

std::vector<double> MfccExtractor::magnitude_spectrum(
    const std::vector<double>& frame) const {
  const std::size_t n = config_.n_fft;
  if (frame.size() > n) throw std::invalid_argument("frame longer than n_fft");
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  std::fill(in, in + n, 0.0);
  std::copy(frame.begin(), frame.end(), in);
  fftw_execute_dft_r2c(fft_->plan, in, out);
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    mag[k] = std::hypot(out[k][0], out[k][1]);
  }
  fftw_free(in);
  fftw_free(out);
  return mag;
}

FeatureMatrix MfccExtractor::mel_energies(const AudioClip& clip) const {
  if (clip.sample_rate != config_.sample_rate) {
    throw std::invalid_argument(
        "clip sample rate " + std::to_string(clip.sample_rate) +
        " differs from pipeline rate " + std::to_string(config_.sample_rate));
  }
  const auto frames = frame_signal(clip, config_.window_ms, config_.hop_ms);
  const std::size_t bins = config_.n_fft / 2 + 1;
  FeatureMatrix out(frames.size(), config_.n_mels);
  out.window_ms = config_.window_ms;
  out.hop_ms = config_.hop_ms;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const std::vector<double> mag = magnitude_spectrum(frames[t]);
    for (std::size_t m = 0; m < config_.n_mels; ++m) {
      const double* w = filters_.data() + m * bins;
      double acc = 0.0;
      for (std::size_t k = 0; k < bins; ++k) acc += w[k] * mag[k];
      out.at(t, m) = acc;
    }
  }
  return out;
}

FeatureMatrix MfccExtractor::compute(const AudioClip& clip) const {
  FeatureMatrix mel = mel_energies(clip);
  for (double& v : mel.values) v = std::log(std::max(v, config_.log_floor));
  if (!config_.apply_dct) return mel;

  const std::size_t mels = config_.n_mels;
  FeatureMatrix out(mel.frames, config_.n_coeffs);
  out.window_ms = mel.window_ms;
  out.hop_ms = mel.hop_ms;
  for (std::size_t t = 0; t < mel.frames; ++t) {
    const double* row = mel.values.data() + t * mels;
    for (std::size_t k = 0; k < config_.n_coeffs; ++k) {
      const double* basis = dct_.data() + k * mels;
      double acc = 0.0;
      for (std::size_t m = 0; m < mels; ++m) acc += basis[m] * row[m];
      out.at(t, k) = acc;
    }
  }
  return out;
}

FeatureMatrix mfcc(const AudioClip& clip, std::size_t n_coeffs,
                   std::size_t n_mels) {
  MfccConfig config;
  config.sample_rate = clip.sample_rate;
  config.n_coeffs = n_coeffs;
  config.n_mels = n_mels;
  return MfccExtractor(config).compute(clip);
}

FeatureMatrix spec_augment(const FeatureMatrix& feat, const AugmentSpec& spec,
                           Rng& rng) {
  spec.validate();
  FeatureMatrix out = feat;
  if (feat.values.empty()) return out;
  const double fill = feat.mean();
  const auto channels = static_cast<std::int64_t>(feat.coeffs);
  const auto steps = static_cast<std::int64_t>(feat.frames);

  for (int i = 0; i < spec.num_masks; ++i) {
    const std::int64_t f = std::min<std::int64_t>(
        rng.uniform_int(0, spec.freq_mask_param), channels);
    const std::int64_t f0 = rng.uniform_int(0, channels - f);
    for (std::size_t t = 0; t < feat.frames; ++t) {
      for (std::int64_t c = f0; c < f0 + f; ++c) {
        out.at(t, static_cast<std::size_t>(c)) = fill;
      }
    }
  }
  for (int i = 0; i < spec.num_masks; ++i) {
    const std::int64_t w = std::min<std::int64_t>(
        rng.uniform_int(0, spec.time_mask_param), steps);
    const std::int64_t t0 = rng.uniform_int(0, steps - w);
    for (std::int64_t t = t0; t < t0 + w; ++t) {
      for (std::size_t c = 0; c < feat.coeffs; ++c) {
        out.at(static_cast<std::size_t>(t), c) = fill;
      }
    }
  }
  return out;
}

FeatureMatrix crop_or_pad(const FeatureMatrix& feat, std::size_t target_frames,
                          CropMode mode, Rng& rng) {
  if (target_frames == 0) {
    throw std::invalid_argument("crop target must be positive");
  }
  FeatureMatrix out(target_frames, feat.coeffs, 0.0);
  out.window_ms = feat.window_ms;
  out.hop_ms = feat.hop_ms;
  const std::size_t c = feat.coeffs;
  if (feat.frames >= target_frames) {
    const std::size_t slack = feat.frames - target_frames;
    const std::size_t start =
        mode == CropMode::kEval
            ? slack / 2
            : static_cast<std::size_t>(
                  rng.uniform_int(0, static_cast<std::int64_t>(slack)));
    std::copy_n(feat.values.begin() + static_cast<std::ptrdiff_t>(start * c),
                target_frames * c, out.values.begin());
  } else {
    const std::size_t left = (target_frames - feat.frames) / 2;
    std::copy(feat.values.begin(), feat.values.end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(left * c));
  }
  return out;
}

std::vector<double> temporal_mean(const FeatureMatrix& feat) {
  std::vector<double> out(feat.coeffs, 0.0);
  if (feat.frames == 0) return out;
  for (std::size_t t = 0; t < feat.frames; ++t) {
    for (std::size_t c = 0; c < feat.coeffs; ++c) out[c] += feat.at(t, c);
  }
  for (double& v : out) v /= static_cast<double>(feat.frames);
  return out;
}

}  // namespace mmsret
