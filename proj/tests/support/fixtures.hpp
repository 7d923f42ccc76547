#pragma once

#include "neat/dataset.hpp"
#include "neat/model.hpp"
#include "neat/reward.hpp"

namespace fixtures {

// Small model for gradient and enumeration tests: same code paths, far fewer
// parameters than the reference shape.
inline neat::ModelArch tiny_arch() {
    neat::ModelArch a;
    a.vocab = 12;
    a.dim = 8;
    a.max_seq = 16;
    a.blocks = 2;
    a.heads = 2;
    return a;
}

inline neat::ModelParams tiny_params(std::uint64_t seed, double std_dev = 0.1) {
    neat::ModelParams p(tiny_arch());
    p.init_gaussian(seed, std_dev);
    return p;
}

// One-family reward spec living inside the tiny vocabulary: good {3,4},
// bad {10,11}, neutral {5..9}.
inline neat::RewardSpec tiny_spec() {
    neat::RewardSpec spec;
    spec.weights = {1.0, -2.0, -0.05, -1.0};
    spec.target_len = 3;
    spec.max_len = 5;
    spec.bad_tokens = {10, 11};
    spec.family_names = {"t0"};
    spec.good_sets = {{3, 4}};
    spec.query_family[{5, 6}] = 0;
    spec.validate();
    return spec;
}

inline neat::PreferenceRecord tiny_record() {
    neat::PreferenceRecord rec;
    rec.query = {5, 6};
    rec.family = "t0";
    rec.responses = {
        {{3, 4, 1}, 2.0, neat::kOriginDataset},
        {{3, 7, 1}, 1.0, neat::kOriginDataset},
        {{8, 9, 1}, 0.0, neat::kOriginDataset},
        {{10, 5, 1}, -2.0, neat::kOriginDataset},
    };
    return rec;
}

}  // namespace fixtures
