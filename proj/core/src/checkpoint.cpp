#include "cxgrad/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace cxgrad::checkpoint {

namespace {

constexpr char kMagic[4] = {'C', 'X', 'G', 'C'};

void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_i32(std::ostream& out, int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_i64(std::ostream& out, int64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t get_u32(std::istream& in) {
    uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
int32_t get_i32(std::istream& in) {
    int32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
int64_t get_i64(std::istream& in) {
    int64_t v;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    uint32_t n = get_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

void put_tensor(std::ostream& out, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_i32(out, d);
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.data().size() * sizeof(double)));
}

Tensor get_tensor(std::istream& in) {
    uint32_t ndim = get_u32(in);
    Shape shape(ndim);
    for (auto& d : shape) d = get_i32(in);
    size_t n = numel(shape);
    std::vector<double> data(n);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    return Tensor(shape, std::move(data));
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 4);
    put_u32(out, kFormatVersion);
    out.put(ck.kind == meta::LearnerKind::Maml ? 0 : 1);
    put_i32(out, ck.n_way);
    put_i32(out, ck.width);
    put_i32(out, ck.in_channels);
    put_i32(out, ck.image_h);
    put_i32(out, ck.image_w);
    put_i32(out, ck.mk.nu_dim);
    put_string(out, ck.config_text);

    meta::MetaKnowledge view = ck.mk;  // shallow copy; named_params wants mutable access
    auto params = meta::named_params(view);
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (auto& [name, t] : params) {
        put_string(out, name);
        put_tensor(out, *t);
    }

    put_i64(out, ck.opt.t);
    uint32_t n_opt = 0;
    for (auto& [name, t] : params)
        if (ck.opt.m.count(name)) ++n_opt;
    put_u32(out, n_opt);
    // Deterministic slot order: iterate the parameter name order, not the map.
    for (auto& [name, t] : params) {
        (void)t;
        auto mi = ck.opt.m.find(name);
        if (mi == ck.opt.m.end()) continue;
        put_string(out, name);
        put_tensor(out, mi->second);
        put_tensor(out, ck.opt.v.at(name));
    }
    if (!out) throw CheckpointError("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("not a checkpoint file: " + path);
    uint32_t version = get_u32(in);
    if (version != kFormatVersion)
        throw CheckpointError("checkpoint version mismatch in " + path + ": found " +
                              std::to_string(version) + ", expected " +
                              std::to_string(kFormatVersion));

    Checkpoint ck;
    ck.kind = in.get() == 0 ? meta::LearnerKind::Maml : meta::LearnerKind::CxGrad;
    ck.n_way = get_i32(in);
    ck.width = get_i32(in);
    ck.in_channels = get_i32(in);
    ck.image_h = get_i32(in);
    ck.image_w = get_i32(in);
    ck.mk.nu_dim = get_i32(in);
    ck.config_text = get_string(in);

    ck.mk.backbone.width = ck.width;
    ck.mk.backbone.in_channels = ck.in_channels;
    if (ck.kind == meta::LearnerKind::CxGrad) ck.mk.subnet.emplace();

    auto slots = meta::named_params(ck.mk);
    uint32_t nparams = get_u32(in);
    if (nparams != slots.size())
        throw CheckpointError("checkpoint parameter count mismatch in " + path);
    for (uint32_t i = 0; i < nparams; ++i) {
        std::string name = get_string(in);
        if (name != slots[i].first)
            throw CheckpointError("unexpected parameter '" + name + "' in " + path +
                                  " (wanted '" + slots[i].first + "')");
        *slots[i].second = get_tensor(in);
    }

    ck.opt.t = get_i64(in);
    uint32_t nopt = get_u32(in);
    for (uint32_t i = 0; i < nopt; ++i) {
        std::string name = get_string(in);
        Tensor m = get_tensor(in);
        Tensor v = get_tensor(in);
        ck.opt.m.emplace(name, std::move(m));
        ck.opt.v.emplace(name, std::move(v));
    }
    if (!in) throw CheckpointError("truncated checkpoint: " + path);
    return ck;
}

}  // namespace cxgrad::checkpoint
