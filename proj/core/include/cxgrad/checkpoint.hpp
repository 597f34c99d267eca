#pragma once

#include <string>

#include "cxgrad/meta.hpp"

namespace cxgrad::checkpoint {

struct CheckpointError : TensorError {
    explicit CheckpointError(const std::string& msg) : TensorError(msg) {}
};

inline constexpr uint32_t kFormatVersion = 1;

/// Everything needed to resume or evaluate a run: the learner, the model
/// geometry, all named parameter tensors, the optimizer state and the
/// resolved config text. Binary format, bit-exact across save/load.
struct Checkpoint {
    meta::LearnerKind kind = meta::LearnerKind::Maml;
    int n_way = 5;
    int width = 16;
    int in_channels = 1;
    int image_h = 32, image_w = 32;
    meta::MetaKnowledge mk;
    meta::AdamState opt;
    std::string config_text;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);  // throws CheckpointError

}  // namespace cxgrad::checkpoint
