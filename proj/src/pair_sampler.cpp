#include "geomem/pair_sampler.hpp"

#include "geomem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace geomem {

std::string to_string(SamplerMode mode) { return mode == SamplerMode::Training ? "training" : "benchmark"; }

SamplerMode sampler_mode_from_string(const std::string& s) {
  if (s == "training") return SamplerMode::Training;
  if (s == "benchmark") return SamplerMode::Benchmark;
  throw InputError("unknown sampler mode '" + s + "'");
}

std::pair<int, int> valid_shift_range(int clip_length, double overlap_min, double overlap_max) {
  const double l = clip_length;
  const int lo = std::max(1, static_cast<int>(std::ceil((1.0 - overlap_max) * l - 1e-9)));
  const int hi = static_cast<int>(std::floor((1.0 - overlap_min) * l + 1e-9));
  return {lo, hi};
}

PairStream ssm_pair_sampler(const std::vector<PosedSequence>& sequences, int count, std::uint64_t seed,
                            const PairSamplerOptions& options) {
  if (options.clip_length < 2) throw InputError("ssm_pair_sampler: clip_length must be >= 2");
  if (count < 0) throw InputError("ssm_pair_sampler: negative pair count");
  PairStream stream;
  if (sequences.empty() || count == 0) return stream;

  const int len = options.clip_length;
  const auto [shift_lo, shift_hi] = valid_shift_range(len, options.overlap_min, options.overlap_max);

  std::vector<bool> usable(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const int n = static_cast<int>(sequences[i].views.size());
    usable[i] = shift_lo <= shift_hi && n >= len + shift_lo;
  }
  if (std::none_of(usable.begin(), usable.end(), [](bool b) { return b; })) {
    stream.log.push_back("no sequence admits a window pair with overlap in [" + std::to_string(options.overlap_min) +
                         ", " + std::to_string(options.overlap_max) + "] at clip length " + std::to_string(len));
    return stream;
  }

  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick_seq(0, sequences.size() - 1);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution omit(options.p_omit);
  std::bernoulli_distribution keep_all(options.p_keep_all_benchmark);
  const double p_drop =
      options.mode == SamplerMode::Training ? options.p_drop_training : options.p_drop_benchmark;
  std::bernoulli_distribution drop(p_drop);

  while (static_cast<int>(stream.pairs.size()) < count) {
    const std::size_t si = pick_seq(rng);
    const int n = static_cast<int>(sequences[si].views.size());
    if (!usable[si]) {
      ++stream.skipped;
      stream.log.push_back("sequence " + std::to_string(si) + " (" + std::to_string(n) +
                           " frames) has no valid overlap window, pair skipped");
      continue;
    }
    const int shift = std::uniform_int_distribution<int>(shift_lo, std::min(shift_hi, n - len))(rng);
    const int start = std::uniform_int_distribution<int>(0, n - len - shift)(rng);
    const bool target_first = coin(rng);
    const int tar0 = target_first ? start : start + shift;
    const int ref0 = target_first ? start + shift : start;

    SsmTrainingPair p;
    p.sequence = static_cast<int>(si);
    p.target_frames.resize(std::size_t(len));
    p.reference_window.resize(std::size_t(len));
    std::iota(p.target_frames.begin(), p.target_frames.end(), tar0);
    std::iota(p.reference_window.begin(), p.reference_window.end(), ref0);
    p.overlap = double(len - shift) / double(len);

    if (omit(rng)) {
      p.omitted = true;
      p.dropped = len;
    } else if (options.mode == SamplerMode::Benchmark && keep_all(rng)) {
      p.kept_all = true;
      p.reference_frames = p.reference_window;
    } else {
      for (int f : p.reference_window) {
        if (drop(rng)) {
          ++p.dropped;
        } else {
          p.reference_frames.push_back(f);
        }
      }
    }
    std::shuffle(p.reference_frames.begin(), p.reference_frames.end(), rng);
    stream.pairs.push_back(std::move(p));
  }
  return stream;
}

}  // namespace geomem
