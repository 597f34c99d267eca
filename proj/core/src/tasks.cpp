#include "cxgrad/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace cxgrad::tasks {

namespace fs = std::filesystem;

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw TaskError("unknown split '" + name + "' (expected train/val/test)");
}

SourceVariant variant_from_name(const std::string& name) {
    if (name == "synthetic-gaussian" || name == "gaussian") return SourceVariant::SyntheticGaussian;
    if (name == "synthetic-pattern" || name == "pattern") return SourceVariant::SyntheticPattern;
    if (name == "synthetic-crossdomain" || name == "cross-domain")
        return SourceVariant::SyntheticCrossDomain;
    if (name == "directory-dataset" || name == "directory") return SourceVariant::Directory;
    throw TaskError("unknown task-source variant '" + name + "'");
}

const char* variant_name(SourceVariant v) {
    switch (v) {
        case SourceVariant::SyntheticGaussian: return "synthetic-gaussian";
        case SourceVariant::SyntheticPattern: return "synthetic-pattern";
        case SourceVariant::SyntheticCrossDomain: return "synthetic-crossdomain";
        case SourceVariant::Directory: return "directory-dataset";
    }
    return "?";
}

SyntheticClassSpec make_class_spec(SourceVariant variant, int class_id, uint64_t source_seed,
                                   int channels, int height, int width, double noise_scale) {
    SyntheticClassSpec spec;
    spec.variant = variant;
    spec.class_id = class_id;
    spec.channels = channels;
    spec.height = height;
    spec.width = width;
    spec.noise_scale = noise_scale;

    Rng rng(derive_seed(source_seed, "class:" + std::to_string(class_id)));
    spec.orientation = rng.uniform(0.0, M_PI);
    spec.frequency = rng.uniform(0.08, 0.28);
    spec.phase = rng.uniform(0.0, 2.0 * M_PI);
    spec.grating_amp = rng.uniform(0.35, 0.75);
    spec.stripe_width = 2 + rng.uniform_int(5);
    const int n_blobs = (variant == SourceVariant::SyntheticGaussian) ? 3 : 2;
    for (int b = 0; b < n_blobs; ++b) {
        SyntheticClassSpec::Blob blob;
        blob.cx = rng.uniform(0.2, 0.8);
        blob.cy = rng.uniform(0.2, 0.8);
        blob.sigma = rng.uniform(0.08, 0.18);
        blob.amp = rng.uniform(0.4, 0.9);
        spec.blobs.push_back(blob);
    }
    for (int c = 0; c < 3; ++c) spec.tint[c] = rng.uniform(0.5, 1.0);
    return spec;
}

namespace {

void render_sample(const SyntheticClassSpec& spec, Rng& rng, double* out) {
    const int H = spec.height, W = spec.width;
    const double ns = spec.noise_scale;
    const double phase_jitter = rng.normal(0.0, 0.35 * ns);
    const double cx_jitter = rng.normal(0.0, 1.5 * ns);
    const double cy_jitter = rng.normal(0.0, 1.5 * ns);
    const double amp_jitter = 1.0 + rng.normal(0.0, 0.08 * ns);

    std::vector<double> mono(static_cast<size_t>(H) * W, 0.0);
    const double ct = std::cos(spec.orientation), st = std::sin(spec.orientation);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double v = 0.5;
            const double proj = ct * x + st * y;
            switch (spec.variant) {
                case SourceVariant::SyntheticPattern:
                    v += 0.5 * spec.grating_amp *
                         std::sin(2.0 * M_PI * spec.frequency * proj + spec.phase + phase_jitter);
                    break;
                case SourceVariant::SyntheticCrossDomain: {
                    // square-wave stripes: a different statistics family
                    const double t = proj / spec.stripe_width + spec.phase / M_PI + 0.3 * phase_jitter;
                    v += 0.5 * spec.grating_amp * (std::fmod(std::floor(t), 2.0) == 0.0 ? 1.0 : -1.0);
                    break;
                }
                case SourceVariant::SyntheticGaussian:
                    v = 0.1;
                    break;
                default:
                    break;
            }
            for (const auto& blob : spec.blobs) {
                const double bx = blob.cx * W + cx_jitter;
                const double by = blob.cy * H + cy_jitter;
                const double s = blob.sigma * std::min(H, W);
                const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                v += blob.amp * amp_jitter * std::exp(-d2 / (2.0 * s * s));
            }
            mono[static_cast<size_t>(y) * W + x] = v;
        }
    }
    for (int c = 0; c < spec.channels; ++c) {
        const double tint = (spec.channels == 1) ? 1.0 : spec.tint[c % 3];
        for (int i = 0; i < H * W; ++i) {
            double v = tint * mono[static_cast<size_t>(i)] + rng.normal(0.0, 0.03 * ns);
            out[static_cast<size_t>(c) * H * W + i] = std::clamp(v, 0.0, 1.0);
        }
    }
}

}  // namespace

Tensor generate_synthetic_class(const SyntheticClassSpec& spec, int n, Rng& rng) {
    if (n < 1) throw TaskError("generate_synthetic_class: n must be >= 1");
    const long long per = static_cast<long long>(spec.channels) * spec.height * spec.width;
    std::vector<double> data(static_cast<size_t>(n * per));
    for (int i = 0; i < n; ++i) render_sample(spec, rng, data.data() + i * per);
    return Tensor({n, spec.channels, spec.height, spec.width}, std::move(data));
}

TaskSource TaskSource::synthetic(SourceVariant variant, uint64_t seed, int channels, int height,
                                 int width, double noise_scale, int train_classes, int val_classes,
                                 int test_classes) {
    if (variant == SourceVariant::Directory)
        throw TaskError("TaskSource::synthetic: use from_directory for directory datasets");
    TaskSource src;
    src.variant_ = variant;
    src.seed_ = seed;
    src.channels_ = channels;
    src.height_ = height;
    src.width_ = width;
    src.noise_scale_ = noise_scale;
    int id = 0;
    for (int i = 0; i < train_classes; ++i) src.train_pool_.push_back(id++);
    for (int i = 0; i < val_classes; ++i) src.val_pool_.push_back(id++);
    for (int i = 0; i < test_classes; ++i) src.test_pool_.push_back(id++);
    return src;
}

const std::vector<int>& TaskSource::pool(Split split) const {
    switch (split) {
        case Split::Train: return train_pool_;
        case Split::Val: return val_pool_;
        case Split::Test: return test_pool_;
    }
    throw TaskError("bad split");
}

int TaskSource::num_classes(Split split) const { return static_cast<int>(pool(split).size()); }

Episode TaskSource::sample_episode(Split split, int n_way, int k_shot, int q_queries,
                                   Rng& rng) const {
    const auto& classes = pool(split);
    if (static_cast<int>(classes.size()) < n_way)
        throw TaskError("sample_episode: insufficient classes in split '" +
                        std::string(split_name(split)) + "': have " +
                        std::to_string(classes.size()) + ", need " + std::to_string(n_way));
    const int per_class = k_shot + q_queries;

    // choose() returns a uniformly random ordered selection, which doubles
    // as the label permutation.
    std::vector<int> picked = rng.choose(static_cast<int>(classes.size()), n_way);

    Episode ep;
    ep.n_way = n_way;
    ep.k_shot = k_shot;
    ep.q_queries = q_queries;
    const long long per_img = static_cast<long long>(channels_) * height_ * width_;
    std::vector<double> sup(static_cast<size_t>(n_way * k_shot * per_img));
    std::vector<double> qry(static_cast<size_t>(n_way * q_queries * per_img));

    for (int label = 0; label < n_way; ++label) {
        const int cls = classes[static_cast<size_t>(picked[static_cast<size_t>(label)])];
        ep.class_remap.push_back(cls);
        Tensor samples;
        if (variant_ == SourceVariant::Directory) {
            auto it = images_.find(cls);
            const auto& imgs = it->second;
            if (static_cast<int>(imgs.size()) < per_class)
                throw TaskError("sample_episode: class '" + class_names_[static_cast<size_t>(cls)] +
                                "' has " + std::to_string(imgs.size()) + " samples, need " +
                                std::to_string(per_class));
            std::vector<int> idx = rng.choose(static_cast<int>(imgs.size()), per_class);
            std::vector<double> buf(static_cast<size_t>(per_class * per_img));
            for (int i = 0; i < per_class; ++i)
                std::copy(imgs[static_cast<size_t>(idx[static_cast<size_t>(i)])].data().begin(),
                          imgs[static_cast<size_t>(idx[static_cast<size_t>(i)])].data().end(),
                          buf.begin() + i * per_img);
            samples = Tensor({per_class, channels_, height_, width_}, std::move(buf));
        } else {
            SyntheticClassSpec spec =
                make_class_spec(variant_, cls, seed_, channels_, height_, width_, noise_scale_);
            samples = generate_synthetic_class(spec, per_class, rng);
        }
        // first K to support, next Q to query: disjoint by construction
        std::copy(samples.data().begin(), samples.data().begin() + k_shot * per_img,
                  sup.begin() + static_cast<size_t>(label) * k_shot * per_img);
        std::copy(samples.data().begin() + k_shot * per_img, samples.data().end(),
                  qry.begin() + static_cast<size_t>(label) * q_queries * per_img);
        for (int i = 0; i < k_shot; ++i) ep.support_y.push_back(label);
        for (int i = 0; i < q_queries; ++i) ep.query_y.push_back(label);
    }
    ep.support_x = Tensor({n_way * k_shot, channels_, height_, width_}, std::move(sup));
    ep.query_x = Tensor({n_way * q_queries, channels_, height_, width_}, std::move(qry));
    return ep;
}

// ---------------------------------------------------------------------------
// PNM ingestion

namespace {

void skip_pnm_whitespace(std::istream& in) {
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

int read_pnm_int(std::istream& in, const std::string& path) {
    skip_pnm_whitespace(in);
    int v = -1;
    if (!(in >> v) || v < 0) throw TaskError("malformed PNM header in '" + path + "'");
    return v;
}

Tensor bilinear_resize(const Tensor& img, int out_h, int out_w) {
    const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
    std::vector<double> out(static_cast<size_t>(C) * out_h * out_w);
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < out_h; ++y) {
            const double sy = (out_h == 1) ? 0.0 : static_cast<double>(y) * (H - 1) / (out_h - 1);
            const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, H - 1);
            const double fy = sy - y0;
            for (int x = 0; x < out_w; ++x) {
                const double sx = (out_w == 1) ? 0.0 : static_cast<double>(x) * (W - 1) / (out_w - 1);
                const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, W - 1);
                const double fx = sx - x0;
                auto px = [&](int yy, int xx) {
                    return img[(static_cast<size_t>(c) * H + yy) * W + xx];
                };
                out[(static_cast<size_t>(c) * out_h + y) * out_w + x] =
                    (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
                    fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
            }
        }
    }
    return Tensor({C, out_h, out_w}, std::move(out));
}

Tensor center_crop(const Tensor& img) {
    const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
    const int side = std::min(H, W);
    if (H == W) return img;
    const int oy = (H - side) / 2, ox = (W - side) / 2;
    std::vector<double> out(static_cast<size_t>(C) * side * side);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                out[(static_cast<size_t>(c) * side + y) * side + x] =
                    img[(static_cast<size_t>(c) * H + y + oy) * W + x + ox];
    return Tensor({C, side, side}, std::move(out));
}

Tensor to_channels(const Tensor& img, int channels) {
    const int C = img.dim(0);
    if (C == channels) return img;
    const int H = img.dim(1), W = img.dim(2);
    std::vector<double> out(static_cast<size_t>(channels) * H * W);
    if (C == 3 && channels == 1) {
        for (int i = 0; i < H * W; ++i)
            out[static_cast<size_t>(i)] =
                (img[static_cast<size_t>(i)] + img[static_cast<size_t>(H * W + i)] +
                 img[static_cast<size_t>(2 * H * W + i)]) /
                3.0;
    } else if (C == 1) {
        for (int c = 0; c < channels; ++c)
            for (int i = 0; i < H * W; ++i) out[static_cast<size_t>(c * H * W + i)] = img[static_cast<size_t>(i)];
    } else {
        throw TaskError("cannot convert " + std::to_string(C) + "-channel image to " +
                        std::to_string(channels) + " channels");
    }
    return Tensor({channels, H, W}, std::move(out));
}

}  // namespace

Tensor load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TaskError("cannot open image file '" + path + "'");
    char m0 = 0, m1 = 0;
    in.get(m0).get(m1);
    if (m0 != 'P' || (m1 != '2' && m1 != '3' && m1 != '5' && m1 != '6'))
        throw TaskError("malformed image file '" + path + "': not a P2/P3/P5/P6 PNM");
    const bool color = (m1 == '3' || m1 == '6');
    const bool binary = (m1 == '5' || m1 == '6');
    const int C = color ? 3 : 1;
    const int W = read_pnm_int(in, path);
    const int H = read_pnm_int(in, path);
    const int maxval = read_pnm_int(in, path);
    if (W <= 0 || H <= 0 || maxval <= 0 || maxval > 255)
        throw TaskError("malformed image file '" + path + "': bad dims/maxval");
    const size_t n = static_cast<size_t>(C) * H * W;
    std::vector<double> interleaved(n);
    if (binary) {
        in.get();  // single whitespace after maxval
        std::vector<unsigned char> raw(n);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in.gcount()) != n)
            throw TaskError("malformed image file '" + path + "': truncated payload");
        for (size_t i = 0; i < n; ++i) interleaved[i] = static_cast<double>(raw[i]) / maxval;
    } else {
        for (size_t i = 0; i < n; ++i) {
            int v = 0;
            if (!(in >> v) || v < 0 || v > maxval)
                throw TaskError("malformed image file '" + path + "': bad pixel value");
            interleaved[i] = static_cast<double>(v) / maxval;
        }
    }
    // interleaved RGB -> planar CHW
    std::vector<double> planar(n);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c)
                planar[(static_cast<size_t>(c) * H + y) * W + x] =
                    interleaved[(static_cast<size_t>(y) * W + x) * C + c];
    return Tensor({C, H, W}, std::move(planar));
}

void save_pgm(const std::string& path, const Tensor& image) {
    Tensor img = image;
    if (img.ndim() == 2) img = Tensor({1, img.dim(0), img.dim(1)}, img.data());
    if (img.ndim() != 3 || img.dim(0) != 1)
        throw TaskError("save_pgm: expected (1,H,W) or (H,W), got " + shape_str(image.shape()));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TaskError("cannot write '" + path + "'");
    out << "P5\n" << img.dim(2) << " " << img.dim(1) << "\n255\n";
    for (double v : img.data())
        out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5)));
}

void save_ppm(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw TaskError("save_ppm: expected (3,H,W), got " + shape_str(image.shape()));
    const int H = image.dim(1), W = image.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TaskError("cannot write '" + path + "'");
    out << "P6\n" << W << " " << H << "\n255\n";
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = image[(static_cast<size_t>(c) * H + y) * W + x];
                out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5)));
            }
}

TaskSource TaskSource::from_directory(const std::string& path, int channels, int height, int width) {
    TaskSource src;
    src.variant_ = SourceVariant::Directory;
    src.channels_ = channels;
    src.height_ = height;
    src.width_ = width;

    int class_id = 0;
    for (Split split : {Split::Train, Split::Val, Split::Test}) {
        const fs::path split_dir = fs::path(path) / split_name(split);
        if (!fs::is_directory(split_dir))
            throw TaskError("dataset directory '" + path + "' is missing split '" +
                            split_name(split) + "'");
        std::vector<fs::path> class_dirs;
        for (const auto& e : fs::directory_iterator(split_dir))
            if (e.is_directory()) class_dirs.push_back(e.path());
        std::sort(class_dirs.begin(), class_dirs.end());
        for (const auto& cdir : class_dirs) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(cdir)) {
                const auto ext = e.path().extension().string();
                if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            std::vector<Tensor>& imgs = src.images_[class_id];
            for (const auto& f : files) {
                Tensor img = to_channels(bilinear_resize(center_crop(load_pnm(f.string())), height, width),
                                         channels);
                imgs.push_back(std::move(img));
            }
            src.class_names_.push_back(cdir.filename().string());
            switch (split) {
                case Split::Train: src.train_pool_.push_back(class_id); break;
                case Split::Val: src.val_pool_.push_back(class_id); break;
                case Split::Test: src.test_pool_.push_back(class_id); break;
            }
            ++class_id;
        }
    }
    return src;
}

// ---------------------------------------------------------------------------
// Episode cache

namespace {

constexpr char kCacheMagic[4] = {'C', 'X', 'E', 'P'};
constexpr uint32_t kCacheVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw TaskError("truncated episode cache '" + path + "'");
    return v;
}

void put_floats(std::ostream& out, const std::vector<double>& d) {
    for (double v : d) put(out, static_cast<float>(v));
}

}  // namespace

void write_episode_cache(const std::string& path, const std::vector<Episode>& episodes) {
    if (episodes.empty()) throw TaskError("write_episode_cache: no episodes");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TaskError("cannot write '" + path + "'");
    const Episode& e0 = episodes.front();
    out.write(kCacheMagic, 4);
    put<uint32_t>(out, kCacheVersion);
    put<int32_t>(out, e0.n_way);
    put<int32_t>(out, e0.k_shot);
    put<int32_t>(out, e0.q_queries);
    put<int32_t>(out, e0.support_x.dim(1));
    put<int32_t>(out, e0.support_x.dim(2));
    put<int32_t>(out, e0.support_x.dim(3));
    put<uint32_t>(out, static_cast<uint32_t>(episodes.size()));
    for (const auto& ep : episodes) {
        put_floats(out, ep.support_x.data());
        for (int y : ep.support_y) put<int32_t>(out, y);
        put_floats(out, ep.query_x.data());
        for (int y : ep.query_y) put<int32_t>(out, y);
        for (int c : ep.class_remap) put<int32_t>(out, c);
    }
}

std::vector<Episode> read_episode_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TaskError("cannot open episode cache '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCacheMagic, 4) != 0)
        throw TaskError("'" + path + "' is not an episode cache");
    const auto version = get<uint32_t>(in, path);
    if (version != kCacheVersion)
        throw TaskError("episode cache '" + path + "' has unsupported version " +
                        std::to_string(version));
    const int N = get<int32_t>(in, path), K = get<int32_t>(in, path), Q = get<int32_t>(in, path);
    const int C = get<int32_t>(in, path), H = get<int32_t>(in, path), W = get<int32_t>(in, path);
    const auto count = get<uint32_t>(in, path);
    std::vector<Episode> episodes;
    for (uint32_t i = 0; i < count; ++i) {
        Episode ep;
        ep.n_way = N;
        ep.k_shot = K;
        ep.q_queries = Q;
        auto read_block = [&](int n) {
            std::vector<double> d(static_cast<size_t>(n) * C * H * W);
            for (auto& v : d) v = static_cast<double>(get<float>(in, path));
            return Tensor({n, C, H, W}, std::move(d));
        };
        ep.support_x = read_block(N * K);
        for (int j = 0; j < N * K; ++j) ep.support_y.push_back(get<int32_t>(in, path));
        ep.query_x = read_block(N * Q);
        for (int j = 0; j < N * Q; ++j) ep.query_y.push_back(get<int32_t>(in, path));
        for (int j = 0; j < N; ++j) ep.class_remap.push_back(get<int32_t>(in, path));
        episodes.push_back(std::move(ep));
    }
    return episodes;
}

}  // namespace cxgrad::tasks
