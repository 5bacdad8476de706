// DIO-style f0 estimation: the signal is low-passed at a ladder of boundary
// frequencies, and each band yields four interval series (negative- and
// positive-going zero crossings, peaks, dips). Where the four agree, the band
// proposes their mean as f0; the band with the least spread wins per frame.

#include "triaan/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace triaan {

namespace {

struct IntervalSeries {
  std::vector<double> time;  // seconds, midpoint of each interval
  std::vector<double> f0;    // Hz
};

// Fractional positions where s goes from > 0 to <= 0.
std::vector<double> negative_crossings(const std::vector<double>& s) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i] > 0.0 && s[i + 1] <= 0.0) {
      const double frac = s[i] / (s[i] - s[i + 1]);
      out.push_back(static_cast<double>(i) + frac);
    }
  }
  return out;
}

IntervalSeries intervals(const std::vector<double>& positions, double fs) {
  IntervalSeries r;
  for (std::size_t i = 0; i + 1 < positions.size(); ++i) {
    const double period = positions[i + 1] - positions[i];
    if (period <= 0.0) continue;
    r.time.push_back(0.5 * (positions[i] + positions[i + 1]) / fs);
    r.f0.push_back(fs / period);
  }
  return r;
}

// Linear interpolation; NaN outside the covered range.
double interpolate(const IntervalSeries& s, double t) {
  if (s.time.size() < 2 || t < s.time.front() || t > s.time.back())
    return std::numeric_limits<double>::quiet_NaN();
  auto it = std::upper_bound(s.time.begin(), s.time.end(), t);
  if (it == s.time.end()) return s.f0.back();
  const std::size_t hi = static_cast<std::size_t>(it - s.time.begin());
  const std::size_t lo = hi - 1;
  const double w = (t - s.time[lo]) / (s.time[hi] - s.time[lo]);
  return s.f0[lo] + w * (s.f0[hi] - s.f0[lo]);
}

std::vector<double> nuttall(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    const double x = 2.0 * std::numbers::pi * (i + 1) / (length + 1);
    w[static_cast<std::size_t>(i)] =
        0.355768 - 0.487396 * std::cos(x) + 0.144232 * std::cos(2 * x) - 0.012604 * std::cos(3 * x);
  }
  return w;
}

// Zero-phase FIR filtering with a symmetric kernel (centered 'same' output).
std::vector<double> filter_same(const std::vector<double>& x, const std::vector<double>& h) {
  const auto n = static_cast<long long>(x.size());
  const auto m = static_cast<long long>(h.size());
  const long long center = (m - 1) / 2;
  std::vector<double> y(x.size(), 0.0);
  for (long long i = 0; i < n; ++i) {
    double acc = 0.0;
    const long long k_lo = std::max<long long>(0, i + center - (n - 1));
    const long long k_hi = std::min<long long>(m - 1, i + center);
    for (long long k = k_lo; k <= k_hi; ++k)
      acc += h[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(i + center - k)];
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

std::vector<double> negate(std::vector<double> v) {
  for (double& x : v) x = -x;
  return v;
}

std::vector<double> difference(const std::vector<double>& v) {
  std::vector<double> d(v.size() > 0 ? v.size() - 1 : 0);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) d[i] = v[i + 1] - v[i];
  return d;
}

}  // namespace

Vec estimate_f0_hz(const RawAudio& audio, const PitchConfig& cfg) {
  audio.validate();
  const Eigen::Index frames = frame_count(audio.size());
  Vec f0 = Vec::Zero(frames);

  const int rate = static_cast<int>(cfg.analysis_rate);
  std::vector<double> x = resample(audio.samples, audio.sample_rate, rate);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (double& v : x) v -= mean;
  const double fs = rate;

  // Frame energy gate on the original signal (25 ms window around each frame).
  std::vector<bool> loud(static_cast<std::size_t>(frames), false);
  {
    const auto n = static_cast<long long>(audio.size());
    for (Eigen::Index t = 0; t < frames; ++t) {
      const long long c = t * kHopSize;
      const long long lo = std::max<long long>(0, c - kFftSize / 2);
      const long long hi = std::min<long long>(n, c + kFftSize / 2);
      double e = 0.0;
      for (long long i = lo; i < hi; ++i) e += audio.samples[static_cast<std::size_t>(i)] *
                                               audio.samples[static_cast<std::size_t>(i)];
      loud[static_cast<std::size_t>(t)] = hi > lo && std::sqrt(e / static_cast<double>(hi - lo)) >
                                                         cfg.silence_rms;
    }
  }

  const int bands =
      1 + static_cast<int>(std::log2(cfg.f0_ceil / cfg.f0_floor) * cfg.channels_in_octave);
  Vec best_score = Vec::Constant(frames, std::numeric_limits<double>::infinity());
  Vec best_f0 = Vec::Zero(frames);

  for (int b = 0; b < bands; ++b) {
    const double boundary = cfg.f0_floor * std::pow(2.0, (b + 1) / cfg.channels_in_octave);
    const int half = std::max(1, static_cast<int>(std::lround(fs / boundary / 2.0)));
    const std::vector<double> s = filter_same(x, nuttall(half * 4));
    const std::vector<double> ds = difference(s);
    const IntervalSeries series[4] = {
        intervals(negative_crossings(s), fs),
        intervals(negative_crossings(negate(s)), fs),
        intervals(negative_crossings(ds), fs),
        intervals(negative_crossings(negate(ds)), fs),
    };
    for (Eigen::Index t = 0; t < frames; ++t) {
      const double time = static_cast<double>(t) * kHopSize / kSampleRate;
      double v[4];
      bool ok = true;
      for (int k = 0; k < 4 && ok; ++k) {
        v[k] = interpolate(series[k], time);
        ok = std::isfinite(v[k]);
      }
      if (!ok) continue;
      const double cand = 0.25 * (v[0] + v[1] + v[2] + v[3]);
      if (cand > boundary || cand < boundary / 2.0 || cand > cfg.f0_ceil || cand < cfg.f0_floor)
        continue;
      double var = 0.0;
      for (double vk : v) var += (vk - cand) * (vk - cand);
      const double score = std::sqrt(var / 3.0) / cand;
      if (score < best_score(t)) {
        best_score(t) = score;
        best_f0(t) = cand;
      }
    }
  }

  for (Eigen::Index t = 0; t < frames; ++t)
    if (loud[static_cast<std::size_t>(t)] && best_score(t) < cfg.max_relative_deviation)
      f0(t) = best_f0(t);

  // Drop voiced runs too short to be a pitch period track.
  Eigen::Index t = 0;
  while (t < frames) {
    if (f0(t) <= 0.0) {
      ++t;
      continue;
    }
    Eigen::Index end = t;
    while (end < frames && f0(end) > 0.0) ++end;
    if (end - t < cfg.min_voiced_run) f0.segment(t, end - t).setZero();
    t = end;
  }
  return f0;
}

PitchTrack pitch_from_f0(const Vec& f0_hz) {
  PitchTrack p;
  const Eigen::Index n = f0_hz.size();
  p.f0_hz = f0_hz;
  p.log_f0 = Vec::Zero(n);
  p.voiced.assign(static_cast<std::size_t>(n), false);
  Eigen::Index voiced = 0;
  double sum = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (f0_hz(t) > 0.0 && std::isfinite(f0_hz(t))) {
      p.voiced[static_cast<std::size_t>(t)] = true;
      p.log_f0(t) = std::log(f0_hz(t));
      sum += p.log_f0(t);
      ++voiced;
    } else {
      p.f0_hz(t) = 0.0;
    }
  }
  p.all_unvoiced = voiced == 0;
  if (voiced == 0) return p;
  const double mean = sum / static_cast<double>(voiced);
  double var = 0.0;
  for (Eigen::Index t = 0; t < n; ++t)
    if (p.voiced[static_cast<std::size_t>(t)]) var += (p.log_f0(t) - mean) * (p.log_f0(t) - mean);
  const double sd = std::sqrt(var / static_cast<double>(voiced));
  for (Eigen::Index t = 0; t < n; ++t) {
    if (!p.voiced[static_cast<std::size_t>(t)]) continue;
    // A flat contour carries no relative pitch information; it maps to 0.
    p.log_f0(t) = sd > 1e-12 ? (p.log_f0(t) - mean) / sd : 0.0;
  }
  return p;
}

PitchTrack extract_f0(const RawAudio& audio, const PitchConfig& config) {
  return pitch_from_f0(estimate_f0_hz(audio, config));
}

}  // namespace triaan
