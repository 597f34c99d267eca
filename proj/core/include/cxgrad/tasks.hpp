#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cxgrad/rng.hpp"
#include "cxgrad/tensor.hpp"

namespace cxgrad::tasks {

struct TaskError : TensorError {
    explicit TaskError(const std::string& msg) : TensorError(msg) {}
};

enum class Split { Train, Val, Test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

/// One N-way K-shot task. Labels are remapped to 0..N-1 with a fresh random
/// permutation per episode; class_remap[l] is the original class id behind
/// remapped label l.
struct Episode {
    Tensor support_x;  // (N*K, C, H, W)
    std::vector<int> support_y;
    Tensor query_x;  // (N*Q, C, H, W)
    std::vector<int> query_y;
    std::vector<int> class_remap;
    int n_way = 0, k_shot = 0, q_queries = 0;
};

enum class SourceVariant { SyntheticGaussian, SyntheticPattern, SyntheticCrossDomain, Directory };

SourceVariant variant_from_name(const std::string& name);
const char* variant_name(SourceVariant v);

/// Per-class generative parameters, deterministic given (class id, seed).
struct SyntheticClassSpec {
    SourceVariant variant = SourceVariant::SyntheticPattern;
    int class_id = 0;
    int channels = 1, height = 32, width = 32;
    double noise_scale = 1.0;  // 0 => every sample of the class is identical
    // pattern / cross-domain parameters
    double orientation = 0.0, frequency = 0.2, phase = 0.0, grating_amp = 0.5;
    int stripe_width = 3;
    // blob mixture
    struct Blob {
        double cx, cy, sigma, amp;
    };
    std::vector<Blob> blobs;
    double tint[3] = {1.0, 1.0, 1.0};
};

SyntheticClassSpec make_class_spec(SourceVariant variant, int class_id, uint64_t source_seed,
                                   int channels, int height, int width, double noise_scale);

/// n images in [0,1], shape (n, C, H, W); intra-class variation comes from
/// jitter and pixel noise drawn from rng.
Tensor generate_synthetic_class(const SyntheticClassSpec& spec, int n, Rng& rng);

/// Episodic task distribution over disjoint train/val/test class pools.
/// Immutable after construction; sampling takes an explicit rng.
class TaskSource {
  public:
    static TaskSource synthetic(SourceVariant variant, uint64_t seed, int channels = 1,
                                int height = 32, int width = 32, double noise_scale = 1.0,
                                int train_classes = 64, int val_classes = 16, int test_classes = 20);

    /// Loads split/class/image.pgm|.ppm from disk; images are center-cropped
    /// and bilinearly resized to (height,width), pixel values scaled to [0,1].
    static TaskSource from_directory(const std::string& path, int channels = 1, int height = 32,
                                     int width = 32);

    Episode sample_episode(Split split, int n_way, int k_shot, int q_queries, Rng& rng) const;

    int num_classes(Split split) const;
    SourceVariant variant() const { return variant_; }
    int channels() const { return channels_; }
    int height() const { return height_; }
    int width() const { return width_; }

  private:
    TaskSource() = default;
    const std::vector<int>& pool(Split split) const;

    SourceVariant variant_ = SourceVariant::SyntheticPattern;
    uint64_t seed_ = 0;
    int channels_ = 1, height_ = 32, width_ = 32;
    double noise_scale_ = 1.0;
    std::vector<int> train_pool_, val_pool_, test_pool_;
    // directory-backed data: class id -> stacked images (n, C, H, W)
    std::map<int, std::vector<Tensor>> images_;
    std::vector<std::string> class_names_;
};

// PGM/PPM ingestion and export (binary and ASCII variants).
Tensor load_pnm(const std::string& path);  // (C,H,W) in [0,1]
void save_pgm(const std::string& path, const Tensor& image);  // (1,H,W) or (H,W)
void save_ppm(const std::string& path, const Tensor& image);  // (3,H,W)

// Optional episode cache: fixed header plus raw little-endian float payload.
void write_episode_cache(const std::string& path, const std::vector<Episode>& episodes);
std::vector<Episode> read_episode_cache(const std::string& path);

}  // namespace cxgrad::tasks
