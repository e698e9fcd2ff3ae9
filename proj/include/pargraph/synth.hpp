#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pargraph/labels.hpp"
#include "pargraph/scene.hpp"

namespace pargraph {

// Crowd-scene generator with planted group structure. Subjects are placed in
// tight discs around well-separated group centroids, so with zero feature
// noise the planted partition is recoverable from geometry alone.
struct SynthConfig {
    int n_frames = 1;
    int n_subjects = 10;
    int n_groups = 3;
    int arena_width = 1000;
    int arena_height = 600;
    int feature_dim = 32;
    double noise_sigma = 0.0;
    std::uint64_t embed_seed = 7;      // label-embedding table seed (shared across frames)
    double singleton_fraction = 0.0;   // fraction of subjects left ungrouped
    int actions_per_subject = 2;
    LabelVocab vocab = LabelVocab::make_default();

    void validate() const;  // throws DataError
};

std::vector<FrameAnnotation> synth_generate(const SynthConfig& config, std::uint64_t seed);

// Reference relation matrix computed directly from a frame's features and
// geometry (no learned parameters): a feature-similarity affinity fused with a
// distance affinity, symmetrized, unit diagonal. With separable features this
// is near-block on the planted groups; feature noise degrades it gracefully.
Tensor2 oracle_relation(const FrameAnnotation& frame, double lambda = 0.5);

struct DatasetStats {
    int frames = 0;
    int subjects = 0;
    int groups = 0;      // annotated groups with >= 2 members
    int singletons = 0;  // one-member groups plus uncovered subjects
    long individual_labels = 0;
    long social_labels = 0;
    long global_labels = 0;
    int feature_dim = 0;

    double subjects_per_frame() const { return frames ? double(subjects) / frames : 0.0; }
    double groups_per_frame() const { return frames ? double(groups) / frames : 0.0; }
};

DatasetStats dataset_stats(const std::vector<FrameAnnotation>& frames);
std::string format_stats(const DatasetStats& s);

}  // namespace pargraph
