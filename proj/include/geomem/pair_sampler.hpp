#pragma once

#include "geomem/geometry.hpp"
#include "geomem/memory.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace geomem {

/// Training pairs drop 30% of reference frames; benchmark construction drops 40%
/// and additionally keeps 10% of pairs fully intact.
enum class SamplerMode { Training, Benchmark };

std::string to_string(SamplerMode mode);
SamplerMode sampler_mode_from_string(const std::string& s);

/// A posed video sequence of one scene. Clips are windows of it.
struct PosedSequence {
  std::vector<CameraView> views;
  int scene_id = 0;
};

struct PairSamplerOptions {
  int clip_length = 16;
  double overlap_min = 0.30;
  double overlap_max = 0.90;
  double p_omit = 0.10;          // whole reference clip omitted
  double p_drop_training = 0.30; // per reference frame
  double p_drop_benchmark = 0.40;
  double p_keep_all_benchmark = 0.10;
  SamplerMode mode = SamplerMode::Training;
};

/// One emitted pair. Frame indices refer to the source sequence.
struct SsmTrainingPair {
  int sequence = 0;
  std::vector<int> target_frames;     // contiguous, in temporal order
  std::vector<int> reference_window;  // the full reference clip before any dropping
  std::vector<int> reference_frames;  // survivors, shuffled (an unordered set)
  double overlap = 0.0;               // |target ∩ reference window| / clip_length
  bool omitted = false;
  bool kept_all = false;              // benchmark-mode intact pair
  int dropped = 0;
};

struct PairStream {
  std::vector<SsmTrainingPair> pairs;
  int skipped = 0;
  std::vector<std::string> log;
};

/// Shift range [ceil((1-max)·L), floor((1-min)·L)] for clip length L, so every
/// window pair has temporal overlap in [min, max]. Empty when min > max.
std::pair<int, int> valid_shift_range(int clip_length, double overlap_min, double overlap_max);

/// Draws `count` pairs, each from a uniformly chosen sequence. A sequence too
/// short for any valid window pair is skipped and logged; if no sequence can
/// ever produce a pair the stream ends early.
PairStream ssm_pair_sampler(const std::vector<PosedSequence>& sequences, int count, std::uint64_t seed,
                            const PairSamplerOptions& options = {});

}  // namespace geomem
