#include "tmr/synth.hpp"

#include <algorithm>
#include <string>

#include "tmr/errors.hpp"

namespace tmr {

namespace {

std::vector<double> random_vector(std::size_t n, double scale, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Minimum frames a phase can emit (its cheapest action once).
std::size_t phase_min_frames(const WorkflowSchema& s, int phase) {
  std::size_t best = SIZE_MAX;
  for (int a : s.phases[phase].actions)
    best = std::min(best, s.actions[a].min_frames);
  return best;
}

}  // namespace

std::span<const double> LabeledSequence::frame(std::size_t t) const {
  if (t >= T) throw IndexError("frame: index " + std::to_string(t) + " out of range");
  return std::span<const double>(features).subspan(t * d_raw, d_raw);
}

std::vector<PhaseRun> label_runs(std::span<const int> labels) {
  std::vector<PhaseRun> runs;
  std::size_t start = 0;
  for (std::size_t t = 1; t <= labels.size(); ++t) {
    if (t == labels.size() || labels[t] != labels[start]) {
      runs.push_back({labels[start], start, t});
      start = t;
    }
  }
  return runs;
}

WorkflowSchema default_schema(std::uint64_t prototype_seed) {
  WorkflowSchema s;
  Rng rng(derive_seed(prototype_seed, 0xACB1));

  const int generic_a = 14, generic_b = 15;
  // Two dedicated actions per phase with mixed duration ranges, then two
  // long-running generic actions (idle, irrigation analogs) that occur
  // inside every phase. Generic runs regularly outlast a short clip;
  // identifying the phase there takes context that reaches the surrounding
  // dedicated work.
  const std::size_t short_ranges[7][2] = {{3, 12}, {4, 14}, {3, 10}, {3, 12},
                                          {3, 10}, {4, 14}, {3, 12}};
  const std::size_t long_ranges[7][2] = {{8, 30}, {10, 34}, {8, 26}, {6, 22},
                                         {8, 26}, {10, 30}, {8, 28}};
  for (int p = 0; p < 7; ++p) {
    ActionSpec a;
    a.prototype = random_vector(s.d_raw, 1.0, rng);
    a.min_frames = short_ranges[p][0];
    a.max_frames = short_ranges[p][1];
    s.actions.push_back(std::move(a));
    ActionSpec b;
    b.prototype = random_vector(s.d_raw, 1.0, rng);
    b.min_frames = long_ranges[p][0];
    b.max_frames = long_ranges[p][1];
    s.actions.push_back(std::move(b));
  }
  for (int g = 0; g < 2; ++g) {
    ActionSpec a;
    a.prototype = random_vector(s.d_raw, 1.0, rng);
    a.min_frames = 6;
    a.max_frames = 20;
    s.actions.push_back(std::move(a));
  }

  // The phase bias is deliberately faint: inside a generic run it is the
  // only per-frame phase signal, and it sits well below the noise floor.
  for (int p = 0; p < 7; ++p) {
    PhaseSpec ph;
    ph.actions = {2 * p, 2 * p + 1, generic_a, generic_b};
    ph.bias = random_vector(s.d_raw, 0.10, rng);
    if (p < 6) ph.successors = {p + 1};
    s.phases.push_back(std::move(ph));
  }

  // Phase 4 twins phase 2; only what precedes them tells the two apart.
  s.phases[4].actions = s.phases[2].actions;
  s.phases[4].bias = s.phases[2].bias;
  s.ambiguous_pairs = {{2, 4}};

  // Short separator between the twins, slightly trimmed endpoints.
  s.phases[3].duration_weight = 0.7;
  s.phases[0].duration_weight = 0.8;
  s.phases[6].duration_weight = 0.8;

  // Optional skip of phase 5.
  s.phases[4].successors = {5, 5, 5, 6};

  validate_schema(s);
  return s;
}

void validate_schema(const WorkflowSchema& s) {
  if (s.num_phases < 1) throw ConfigError("schema: num_phases must be >= 1");
  if (s.d_raw < 1) throw ConfigError("schema: d_raw must be >= 1");
  if (static_cast<int>(s.phases.size()) != s.num_phases)
    throw ConfigError("schema: phase list size does not match num_phases");
  for (const auto& a : s.actions) {
    if (a.prototype.size() != s.d_raw)
      throw ConfigError("schema: action prototype width does not match d_raw");
    if (a.min_frames < 1 || a.min_frames > a.max_frames)
      throw ConfigError("schema: action duration bounds must satisfy 1 <= min <= max");
  }
  for (int p = 0; p < s.num_phases; ++p) {
    const auto& ph = s.phases[p];
    if (ph.actions.empty())
      throw ConfigError("schema: phase " + std::to_string(p) + " has no allowed actions");
    for (int a : ph.actions)
      if (a < 0 || a >= static_cast<int>(s.actions.size()))
        throw ConfigError("schema: phase " + std::to_string(p) + " references unknown action");
    if (ph.bias.size() != s.d_raw)
      throw ConfigError("schema: phase bias width does not match d_raw");
    for (int nxt : ph.successors)
      if (nxt < 0 || nxt >= s.num_phases)
        throw ConfigError("schema: phase " + std::to_string(p) + " references unknown successor");
    if (ph.duration_weight <= 0.0)
      throw ConfigError("schema: duration weights must be positive");
  }
  // A path visiting all phases must exist; with the mostly-linear layout
  // this means every non-terminal phase can step to its immediate follower.
  for (int p = 0; p + 1 < s.num_phases; ++p) {
    const auto& succ = s.phases[p].successors;
    if (std::find(succ.begin(), succ.end(), p + 1) == succ.end())
      throw ConfigError("schema: no path visits all phases (phase " + std::to_string(p) +
                        " cannot reach phase " + std::to_string(p + 1) + ")");
  }
  for (auto [src, twin] : s.ambiguous_pairs) {
    if (src < 0 || src >= s.num_phases || twin < 0 || twin >= s.num_phases)
      throw ConfigError("schema: ambiguous pair references unknown phase");
    if (s.phases[src].actions != s.phases[twin].actions ||
        s.phases[src].bias != s.phases[twin].bias)
      throw ConfigError("schema: ambiguous pair must share actions and bias");
  }
  if (s.noise_sigma < 0.0 || s.artifact_sigma < 0.0)
    throw ConfigError("schema: noise levels must be non-negative");
  if (s.p_artifact < 0.0 || s.p_artifact > 1.0)
    throw ConfigError("schema: p_artifact must be in [0, 1]");
  if (s.artifact_min < 1 || s.artifact_min > s.artifact_max)
    throw ConfigError("schema: artifact burst bounds must satisfy 1 <= min <= max");
  if (s.min_length < 1 || s.min_length > s.max_length)
    throw ConfigError("schema: length bounds must satisfy 1 <= min <= max");
}

LabeledSequence generate(const WorkflowSchema& schema, std::uint64_t seed) {
  return generate(schema, seed, schema.min_length, schema.max_length);
}

LabeledSequence generate(const WorkflowSchema& schema, std::uint64_t seed,
                         std::size_t min_length, std::size_t max_length) {
  validate_schema(schema);
  if (min_length < 1 || min_length > max_length)
    throw ConfigError("generate: length range must satisfy 1 <= min <= max");

  // Worst case the walk visits every phase; each must fit one action.
  std::size_t path_min = 0;
  for (int p = 0; p < schema.num_phases; ++p) path_min += phase_min_frames(schema, p);
  if (max_length < path_min)
    throw ConfigError("generate: length range infeasible, full phase path needs at least " +
                      std::to_string(path_min) + " frames");

  Rng rng(seed);
  const std::size_t target =
      min_length + rng.integer(max_length - min_length + 1);

  // Walk the transition graph from phase 0 to a terminal phase.
  std::vector<int> path{0};
  while (!schema.phases[path.back()].successors.empty()) {
    const auto& succ = schema.phases[path.back()].successors;
    path.push_back(succ[rng.integer(succ.size())]);
    if (path.size() > 16 * static_cast<std::size_t>(schema.num_phases))
      throw ConfigError("generate: transition graph walk does not terminate");
  }

  // Allocate jittered per-phase frame shares summing roughly to the target.
  std::vector<double> weights(path.size());
  double wsum = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    weights[i] = schema.phases[path[i]].duration_weight * rng.uniform(0.7, 1.3);
    wsum += weights[i];
  }

  LabeledSequence seq;
  seq.d_raw = schema.d_raw;
  seq.num_phases = schema.num_phases;
  seq.seed = seed;

  for (std::size_t i = 0; i < path.size(); ++i) {
    const int phase = path[i];
    const auto& ph = schema.phases[phase];
    const std::size_t share = std::max<std::size_t>(
        phase_min_frames(schema, phase),
        static_cast<std::size_t>(static_cast<double>(target) * weights[i] / wsum + 0.5));

    const std::size_t phase_begin = seq.T;
    std::size_t emitted = 0;
    while (emitted < share) {
      const int action = ph.actions[rng.integer(ph.actions.size())];
      const auto& a = schema.actions[action];
      const std::size_t dur = a.min_frames + rng.integer(a.max_frames - a.min_frames + 1);
      seq.action_runs.push_back({action, seq.T, seq.T + dur});
      for (std::size_t f = 0; f < dur; ++f) {
        for (std::size_t c = 0; c < schema.d_raw; ++c)
          seq.features.push_back(a.prototype[c] + ph.bias[c] +
                                 schema.noise_sigma * rng.normal());
        seq.labels.push_back(phase);
        ++seq.T;
      }
      emitted += dur;
    }

    // Occlusion analog: one burst of pure noise inside the phase.
    const std::size_t phase_len = seq.T - phase_begin;
    if (rng.uniform() < schema.p_artifact && phase_len >= schema.artifact_min) {
      std::size_t burst = schema.artifact_min +
                          rng.integer(schema.artifact_max - schema.artifact_min + 1);
      burst = std::min(burst, phase_len);
      const std::size_t start = phase_begin + rng.integer(phase_len - burst + 1);
      for (std::size_t t = start; t < start + burst; ++t)
        for (std::size_t c = 0; c < schema.d_raw; ++c)
          seq.features[t * schema.d_raw + c] = schema.artifact_sigma * rng.normal();
    }
  }

  seq.boundaries = label_runs(seq.labels);
  return seq;
}

Dataset make_dataset(const WorkflowSchema& schema, std::size_t n_train,
                     std::size_t n_val, std::size_t n_test,
                     std::uint64_t master_seed) {
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw ConfigError("make_dataset: all split sizes must be >= 1");
  Dataset ds;
  auto fill = [&](std::vector<LabeledSequence>& out, std::uint64_t split_tag, std::size_t n) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(generate(schema, derive_seed(master_seed, (split_tag << 32) | i)));
  };
  fill(ds.train, 1, n_train);
  fill(ds.val, 2, n_val);
  fill(ds.test, 3, n_test);
  return ds;
}

}  // namespace tmr
