#pragma once

// Data layer: per-video feature sequences for two streams (spatial frames,
// short-term motion), average pooling to video level, and a synthetic
// generator with controllable temporal-order signal and cross-stream
// correlation for desk-scale experiments.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "seqfuse/numeric.hpp"

namespace seqfuse {

enum class Stream : std::uint8_t { spatial = 0, motion = 1 };

inline const char* stream_name(Stream s) { return s == Stream::spatial ? "spatial" : "motion"; }

struct FeatureSequence {
  std::size_t dim = 0;
  std::vector<Vec> frames;  // time-ordered, each of length dim
  Stream stream = Stream::spatial;

  std::size_t length() const { return frames.size(); }
};

struct VideoSample {
  std::string id;
  FeatureSequence spatial;
  FeatureSequence motion;
  Vec label;  // length C, entries in {0,1}; one-hot for single-label data
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<VideoSample> samples;

  std::size_t num_classes() const { return class_names.size(); }
};

// Arithmetic mean over frames; the video-level representation consumed by
// the fusion network.
inline Vec average_pool(const FeatureSequence& seq) {
  if (seq.frames.empty()) throw ArgumentError("average_pool: empty sequence");
  Vec out(seq.dim, 0.0);
  for (const Vec& f : seq.frames) axpy(1.0, f, out);
  const double inv = 1.0 / static_cast<double>(seq.frames.size());
  for (double& v : out) v *= inv;
  return out;
}

// Synthetic dataset spec. Two independent signal channels:
//  - temporal_signal: the class is encoded in the ORDER of shared segment
//    prototypes. Segment lengths are equal within a video, so average
//    pooling erases the signal entirely.
//  - pooled_signal: the class is encoded in a video-level offset with a
//    block structure per stream: [shared | unique | noise] dims. The shared
//    block carries the same class vector in both streams, the unique block
//    is stream-specific, the noise block carries no class information and
//    is sampled `distractor` times louder than the signal blocks, so a
//    network that fails to ignore it pays for that at test time.
// The *_neutral_frac knobs blank one channel for a random subset of
// samples (ambiguous segment order / class-neutral offset), which makes
// each single-channel classifier only partially informative.
struct SynthSpec {
  std::size_t classes = 2;
  std::size_t train_per_class = 50;
  std::size_t test_per_class = 50;
  std::size_t t_min = 6;
  std::size_t t_max = 12;
  std::size_t spatial_dim = 8;
  std::size_t motion_dim = 8;
  bool temporal_signal = false;
  bool pooled_signal = false;
  std::size_t segments = 0;  // 0 = smallest workable count
  double noise = 0.1;
  double distractor = 1.0;  // noise multiplier on the noise block (pooled mode)
  double order_neutral_frac = 0.0;
  double pooled_neutral_frac = 0.0;
  std::uint64_t seed = 1;
};

struct SynthResult {
  Dataset train;
  Dataset test;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> all_permutations(std::size_t n) {
  std::vector<std::size_t> base(n);
  for (std::size_t i = 0; i < n; ++i) base[i] = i;
  std::vector<std::vector<std::size_t>> out;
  do {
    out.push_back(base);
  } while (std::next_permutation(base.begin(), base.end()));
  return out;
}

inline std::size_t factorial(std::size_t n) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

struct BlockLayout {
  std::size_t shared = 0;  // dims [0, shared)
  std::size_t unique = 0;  // dims [shared, shared+unique)
};

inline BlockLayout block_layout(std::size_t dim, std::size_t shared_dim) {
  BlockLayout b;
  b.shared = shared_dim;
  b.unique = std::max<std::size_t>(1, dim / 4);
  if (b.shared + b.unique > dim) b.unique = dim - b.shared;
  return b;
}

}  // namespace detail

inline SynthResult synthesize(const SynthSpec& spec) {
  if (spec.classes < 2) throw ArgumentError("synthesize: need at least 2 classes");
  if (spec.spatial_dim < 2 || spec.motion_dim < 2)
    throw ArgumentError("synthesize: feature dims must be >= 2");
  if (spec.t_min < 1 || spec.t_max < spec.t_min)
    throw ArgumentError("synthesize: bad T range");
  if (spec.temporal_signal && spec.t_min < 2)
    throw ArgumentError("synthesize: temporal mode needs t_min >= 2");
  if (!(spec.noise >= 0.0)) throw ArgumentError("synthesize: noise must be >= 0");
  if (!(spec.distractor >= 0.0)) throw ArgumentError("synthesize: distractor must be >= 0");

  // Segment count: caller-fixed, or the smallest S whose orderings can
  // encode all classes (strictly more than `classes` when some samples
  // must carry a class-ambiguous order).
  const bool need_neutral_orders = spec.order_neutral_frac > 0.0;
  std::size_t segs = spec.segments;
  if (segs == 0) {
    segs = 2;
    while (detail::factorial(segs) < spec.classes ||
           (need_neutral_orders && detail::factorial(segs) <= spec.classes))
      ++segs;
  } else {
    if (detail::factorial(segs) < spec.classes)
      throw ArgumentError("synthesize: " + std::to_string(spec.classes) +
                          " classes need as many distinct orderings, but " +
                          std::to_string(segs) + " segments admit only " +
                          std::to_string(detail::factorial(segs)));
    if (need_neutral_orders && detail::factorial(segs) <= spec.classes)
      throw ArgumentError("synthesize: order_neutral_frac > 0 needs more orderings than classes");
  }

  const auto perms = detail::all_permutations(segs);
  // Spread the class orderings across the permutation list so they differ
  // in more than a trailing swap.
  std::vector<std::size_t> class_perm(spec.classes);
  std::vector<bool> taken(perms.size(), false);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    class_perm[c] = c * perms.size() / spec.classes;
    taken[class_perm[c]] = true;
  }
  std::vector<std::size_t> neutral_perms;
  for (std::size_t p = 0; p < perms.size(); ++p)
    if (!taken[p]) neutral_perms.push_back(p);
  if (spec.temporal_signal && spec.t_max < segs)
    throw ArgumentError("synthesize: t_max " + std::to_string(spec.t_max) +
                        " is below the segment count " + std::to_string(segs));

  RngSource rng(spec.seed);

  // Segment prototypes, per stream.
  std::vector<Vec> proto_s(segs, Vec(spec.spatial_dim));
  std::vector<Vec> proto_m(segs, Vec(spec.motion_dim));
  for (std::size_t j = 0; j < segs; ++j) {
    fill_uniform(proto_s[j], rng, -1.0, 1.0);
    fill_uniform(proto_m[j], rng, -1.0, 1.0);
  }

  // Class offsets: shared block identical in both streams, unique block
  // per stream, remaining dims zero.
  const std::size_t shared_dim =
      std::max<std::size_t>(1, std::min(spec.spatial_dim, spec.motion_dim) / 4);
  const auto blk_s = detail::block_layout(spec.spatial_dim, shared_dim);
  const auto blk_m = detail::block_layout(spec.motion_dim, shared_dim);
  std::vector<Vec> offset_s(spec.classes, Vec(spec.spatial_dim, 0.0));
  std::vector<Vec> offset_m(spec.classes, Vec(spec.motion_dim, 0.0));
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Vec shared(shared_dim);
    fill_uniform(shared, rng, -1.0, 1.0);
    for (std::size_t d = 0; d < shared_dim; ++d) {
      offset_s[c][d] = shared[d];
      offset_m[c][d] = shared[d];
    }
    for (std::size_t d = 0; d < blk_s.unique; ++d)
      offset_s[c][blk_s.shared + d] = rng.uniform(-1.0, 1.0);
    for (std::size_t d = 0; d < blk_m.unique; ++d)
      offset_m[c][blk_m.shared + d] = rng.uniform(-1.0, 1.0);
  }
  // Class-neutral offset: the midpoint of the class offsets.
  Vec neutral_s(spec.spatial_dim, 0.0), neutral_m(spec.motion_dim, 0.0);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    axpy(1.0 / spec.classes, offset_s[c], neutral_s);
    axpy(1.0 / spec.classes, offset_m[c], neutral_m);
  }

  auto gen_stream = [&](const std::vector<Vec>& protos, const Vec& offset, Stream tag,
                        std::size_t dim, std::size_t signal_dims, std::size_t frames,
                        const std::vector<std::size_t>* perm) {
    FeatureSequence seq;
    seq.dim = dim;
    seq.stream = tag;
    seq.frames.reserve(frames);
    const std::size_t seg_len = perm ? frames / protos.size() : 0;
    for (std::size_t t = 0; t < frames; ++t) {
      Vec f(dim, 0.0);
      if (perm) {
        const std::size_t slot = std::min(t / seg_len, protos.size() - 1);
        axpy(1.0, protos[(*perm)[slot]], f);
      }
      if (spec.pooled_signal) axpy(1.0, offset, f);
      for (std::size_t d = 0; d < dim; ++d) {
        const bool loud = spec.pooled_signal && d >= signal_dims;
        f[d] += spec.noise * (loud ? spec.distractor : 1.0) * rng.gaussian();
      }
      seq.frames.push_back(std::move(f));
    }
    return seq;
  };

  std::size_t counter = 0;
  auto gen_split = [&](std::size_t per_class, const char* prefix) {
    Dataset ds;
    for (std::size_t c = 0; c < spec.classes; ++c) ds.class_names.push_back("c" + std::to_string(c));
    for (std::size_t c = 0; c < spec.classes; ++c) {
      for (std::size_t k = 0; k < per_class; ++k) {
        std::size_t frames = spec.t_min + rng.index(spec.t_max - spec.t_min + 1);
        const std::vector<std::size_t>* perm = nullptr;
        if (spec.temporal_signal) {
          frames -= frames % segs;
          if (frames < segs) frames = segs;
          std::size_t pidx = class_perm[c];
          if (spec.order_neutral_frac > 0.0 && rng.uniform() < spec.order_neutral_frac)
            pidx = neutral_perms[rng.index(neutral_perms.size())];
          perm = &perms[pidx];
        }
        const bool neutral_offset =
            spec.pooled_neutral_frac > 0.0 && rng.uniform() < spec.pooled_neutral_frac;

        VideoSample sample;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s%05zu", prefix, counter++);
        sample.id = idbuf;
        sample.spatial =
            gen_stream(proto_s, neutral_offset ? neutral_s : offset_s[c], Stream::spatial,
                       spec.spatial_dim, blk_s.shared + blk_s.unique, frames, perm);
        sample.motion =
            gen_stream(proto_m, neutral_offset ? neutral_m : offset_m[c], Stream::motion,
                       spec.motion_dim, blk_m.shared + blk_m.unique, frames, perm);
        sample.label.assign(spec.classes, 0.0);
        sample.label[c] = 1.0;
        ds.samples.push_back(std::move(sample));
      }
    }
    return ds;
  };

  SynthResult out;
  out.train = gen_split(spec.train_per_class, "tr");
  out.test = gen_split(spec.test_per_class, "te");
  return out;
}

// Deterministic holdout split: moves round(frac * N) samples into the
// second part, chosen by a seeded shuffle; both parts keep the original
// relative order.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double frac,
                                                 std::uint64_t seed) {
  if (frac < 0.0 || frac > 1.0) throw ArgumentError("split_dataset: frac outside [0,1]");
  const std::size_t n = ds.samples.size();
  const std::size_t take = static_cast<std::size_t>(frac * static_cast<double>(n) + 0.5);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  RngSource rng(seed);
  rng.shuffle(idx);
  std::vector<bool> held(n, false);
  for (std::size_t i = 0; i < take; ++i) held[idx[i]] = true;
  Dataset rest, holdout;
  rest.class_names = holdout.class_names = ds.class_names;
  for (std::size_t i = 0; i < n; ++i)
    (held[i] ? holdout : rest).samples.push_back(ds.samples[i]);
  return {std::move(rest), std::move(holdout)};
}

}  // namespace seqfuse
