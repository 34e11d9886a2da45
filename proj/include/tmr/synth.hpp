#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tmr/rng.hpp"

namespace tmr {

// A workflow vocabulary: actions with feature prototypes and duration
// bounds, phases built from allowed actions, and a mostly-linear phase
// transition graph. Prototype and bias vectors are stored explicitly so a
// schema fully determines the generated feature distribution.
struct ActionSpec {
  std::vector<double> prototype;  // d_raw
  std::size_t min_frames = 1;
  std::size_t max_frames = 1;
};

struct PhaseSpec {
  std::vector<int> actions;     // indices into WorkflowSchema::actions
  std::vector<double> bias;     // d_raw, small constant offset for the phase
  std::vector<int> successors;  // weighted by repetition; empty = terminal
  double duration_weight = 1.0;
};

struct WorkflowSchema {
  int num_phases = 7;
  std::size_t d_raw = 16;
  std::vector<ActionSpec> actions;
  std::vector<PhaseSpec> phases;
  // (source, twin): twin phases share the source's action set and bias, so
  // per-frame content alone cannot separate them.
  std::vector<std::pair<int, int>> ambiguous_pairs;
  double noise_sigma = 1.1;
  double p_artifact = 0.05;  // chance of one noise burst per phase occurrence
  std::size_t artifact_min = 5;
  std::size_t artifact_max = 15;
  double artifact_sigma = 2.0;
  std::size_t min_length = 300;
  std::size_t max_length = 600;
};

// The stock seven-phase benchmark schema: two dedicated actions per phase,
// two generic actions shared by every phase, phases 2 and 4 ambiguous twins
// separated by phase 3, phase 5 occasionally skipped.
WorkflowSchema default_schema(std::uint64_t prototype_seed = 42);

// Throws ConfigError if the schema is internally inconsistent.
void validate_schema(const WorkflowSchema& schema);

struct PhaseRun {
  int phase;
  std::size_t begin, end;  // [begin, end)
};

struct ActionRun {
  int action;
  std::size_t begin, end;
};

struct LabeledSequence {
  std::size_t T = 0;
  std::size_t d_raw = 0;
  int num_phases = 0;
  std::uint64_t seed = 0;
  std::vector<double> features;  // T x d_raw row-major
  std::vector<int> labels;       // T phase indices
  std::vector<PhaseRun> boundaries;    // derived from labels
  std::vector<ActionRun> action_runs;  // generation metadata, in-memory only

  std::span<const double> frame(std::size_t t) const;
};

std::vector<PhaseRun> label_runs(std::span<const int> labels);

LabeledSequence generate(const WorkflowSchema& schema, std::uint64_t seed);
LabeledSequence generate(const WorkflowSchema& schema, std::uint64_t seed,
                         std::size_t min_length, std::size_t max_length);

struct Dataset {
  std::vector<LabeledSequence> train, val, test;
};

Dataset make_dataset(const WorkflowSchema& schema, std::size_t n_train,
                     std::size_t n_val, std::size_t n_test,
                     std::uint64_t master_seed);

}  // namespace tmr
