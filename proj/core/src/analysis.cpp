#include "cxgrad/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace cxgrad::analysis {

namespace {

// Shortest-round-trip is overkill; 17 significant digits always survives a
// double -> text -> double cycle.
std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double(const std::string& s) {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("malformed CSV number '" + s + "'");
    return v;
}

std::vector<const Tensor*> theta_tensors(const meta::Model& m) {
    std::vector<const Tensor*> out;
    for (const auto& blk : m.backbone.blocks) {
        out.push_back(&blk.conv_w);
        out.push_back(&blk.bn_gamma);
        out.push_back(&blk.bn_beta);
    }
    out.push_back(&m.classifier.weight);
    out.push_back(&m.classifier.bias);
    return out;
}

meta::Model model_to_graph(Graph& g, const meta::Model& m) {
    meta::Model out;
    out.backbone = nn::to_graph(g, m.backbone);
    out.classifier = nn::to_graph(g, m.classifier);
    return out;
}

/// Flattened support-loss gradient over all theta tensors, plus the loss.
std::pair<std::vector<double>, double> support_gradient(const meta::Model& values,
                                                        const tasks::Episode& ep, double bn_eps) {
    Graph g;
    meta::Model m = model_to_graph(g, values);
    Tensor loss = meta::support_loss(m, ep, bn_eps);
    GradMap grads = g.backward(loss, false);
    std::vector<double> flat;
    for (const Tensor* p : theta_tensors(m)) {
        if (grads.contains(*p)) {
            const auto& d = grads.at(*p).data();
            flat.insert(flat.end(), d.begin(), d.end());
        } else {
            flat.insert(flat.end(), p->data().size(), 0.0);
        }
    }
    return {std::move(flat), loss.item()};
}

double vec_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

meta::Model stepped(const meta::Model& m, const std::vector<double>& h, double rate) {
    meta::Model out;
    out.backbone = nn::clone(m.backbone);
    out.classifier = nn::clone(m.classifier);
    size_t off = 0;
    std::vector<Tensor*> dst;
    for (auto& blk : out.backbone.blocks) {
        dst.push_back(&blk.conv_w);
        dst.push_back(&blk.bn_gamma);
        dst.push_back(&blk.bn_beta);
    }
    dst.push_back(&out.classifier.weight);
    dst.push_back(&out.classifier.bias);
    for (Tensor* p : dst) {
        auto& d = p->mutable_data();
        for (double& v : d) v -= rate * h[off++];
    }
    return out;
}

meta::Model detach_model(const meta::Model& m) {
    meta::Model out;
    out.backbone = nn::clone(m.backbone);
    out.classifier = nn::clone(m.classifier);
    return out;
}

Tensor flatten_rows(const Tensor& act) {
    const auto& sh = act.shape();
    int n = sh[0], p = 1;
    for (size_t i = 1; i < sh.size(); ++i) p *= sh[static_cast<size_t>(i)];
    return Tensor({n, p}, act.data());
}

}  // namespace

GradNormRecord layer_grad_norms(const std::vector<meta::AdaptResult>& batch, long long iteration) {
    if (batch.empty()) throw std::invalid_argument("layer_grad_norms: empty batch");
    GradNormRecord rec;
    rec.iteration = iteration;
    size_t count = 0;
    for (const auto& ar : batch) {
        for (const auto& step : ar.layer_grad_norms) {
            if (rec.layer_norms.empty()) rec.layer_norms.assign(step.size(), 0.0);
            if (step.size() != rec.layer_norms.size())
                throw std::invalid_argument("layer_grad_norms: inconsistent layer counts across steps");
            for (size_t i = 0; i < step.size(); ++i) rec.layer_norms[i] += step[i];
            ++count;
        }
    }
    for (auto& v : rec.layer_norms) v /= static_cast<double>(count ? count : 1);
    return rec;
}

double linear_cka(const Tensor& x, const Tensor& y) {
    if (x.shape().size() != 2 || y.shape().size() != 2)
        throw std::invalid_argument("linear_cka: expected 2-D feature matrices");
    const int n = x.dim(0);
    if (y.dim(0) != n) throw std::invalid_argument("linear_cka: row counts differ");
    if (n < 2) throw std::invalid_argument("linear_cka: need at least 2 rows");

    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> xm(x.data().data(), n, x.dim(1));
    Eigen::Map<const Mat> ym(y.data().data(), n, y.dim(1));
    Mat xc = xm.rowwise() - xm.colwise().mean();
    Mat yc = ym.rowwise() - ym.colwise().mean();

    const double xx = (xc.transpose() * xc).norm();
    const double yy = (yc.transpose() * yc).norm();
    if (xx == 0.0 || yy == 0.0)
        throw std::invalid_argument("linear_cka: zero-variance features, similarity undefined");
    const double xy = (yc.transpose() * xc).squaredNorm();
    return xy / (xx * yy);
}

CKARecord cka_before_after(const meta::MetaKnowledge& mk, meta::LearnerKind kind,
                           const tasks::TaskSource& source, tasks::Split split, int n_way,
                           int k_shot, int q_queries, const meta::InnerLoopConfig& cfg, int layer,
                           int n_episodes, Rng& rng) {
    if (layer < 1 || layer > nn::kNumBlocks)
        throw std::invalid_argument("cka_before_after: layer must be in 1.." +
                                    std::to_string(nn::kNumBlocks));
    if (n_episodes < 1) throw std::invalid_argument("cka_before_after: need at least 1 episode");

    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < n_episodes; ++t) {
        tasks::Episode ep = source.sample_episode(split, n_way, k_shot, q_queries, rng);

        std::vector<Tensor> before_acts;
        nn::backbone_forward(mk.backbone, ep.query_x, cfg.bn_eps, &before_acts);

        Graph g;
        meta::GraphModel gm = meta::to_graph(g, mk);
        meta::AdaptResult ar = meta::adapt(g, gm, ep, cfg, kind);

        std::vector<Tensor> after_acts;
        {
            Graph::NoGradGuard ng(g);
            nn::backbone_forward(ar.theta.backbone, ep.query_x, cfg.bn_eps, &after_acts);
        }
        const double v = linear_cka(flatten_rows(before_acts[static_cast<size_t>(layer - 1)]),
                                    flatten_rows(after_acts[static_cast<size_t>(layer - 1)]));
        sum += v;
        sumsq += v * v;
    }

    CKARecord rec;
    rec.layer = layer;
    rec.n_tasks = n_episodes;
    rec.mean_cka = sum / n_episodes;
    if (n_episodes > 1) {
        const double var = (sumsq - sum * sum / n_episodes) / (n_episodes - 1);
        rec.ci95 = 1.96 * std::sqrt(std::max(var, 0.0) / n_episodes);
    }
    return rec;
}

std::vector<EmbeddingRow> export_embeddings(const meta::MetaKnowledge& mk, meta::LearnerKind kind,
                                            const tasks::Episode& ep,
                                            const meta::InnerLoopConfig& cfg,
                                            bool after_adaptation) {
    // Every episode sample, support rows first, then query rows.
    auto features_of = [&](const nn::Backbone& bb, const Tensor& images) {
        std::vector<Tensor> acts;
        nn::backbone_forward(bb, images, cfg.bn_eps, &acts);
        return flatten_rows(acts.back());
    };
    Tensor sup_feats, qry_feats;
    if (after_adaptation) {
        Graph g;
        meta::GraphModel gm = meta::to_graph(g, mk);
        meta::AdaptResult ar = meta::adapt(g, gm, ep, cfg, kind);
        Graph::NoGradGuard ng(g);
        sup_feats = features_of(ar.theta.backbone, ep.support_x);
        qry_feats = features_of(ar.theta.backbone, ep.query_x);
    } else {
        sup_feats = features_of(mk.backbone, ep.support_x);
        qry_feats = features_of(mk.backbone, ep.query_x);
    }

    std::vector<EmbeddingRow> rows;
    int next_id = 0;
    auto append = [&](const Tensor& feats, const std::vector<int>& labels) {
        const int n = feats.dim(0), d = feats.dim(1);
        for (int i = 0; i < n; ++i) {
            EmbeddingRow row;
            row.sample_id = next_id++;
            // Original (pre-remap) class id, so embeddings are comparable
            // across episodes.
            row.label = ep.class_remap[static_cast<size_t>(labels[static_cast<size_t>(i)])];
            row.feature.assign(feats.data().begin() + static_cast<size_t>(i) * d,
                               feats.data().begin() + static_cast<size_t>(i + 1) * d);
            rows.push_back(std::move(row));
        }
    };
    append(sup_feats, ep.support_y);
    append(qry_feats, ep.query_y);
    return rows;
}

double effective_beta(const std::vector<double>& rates, const std::vector<double>& grad_deltas,
                      double h0_norm) {
    if (rates.size() != grad_deltas.size() || rates.empty())
        throw std::invalid_argument("effective_beta: rate/delta size mismatch");
    if (h0_norm == 0.0)
        throw std::invalid_argument("effective_beta: zero base gradient, ratio undefined");
    size_t best = 0;
    for (size_t j = 1; j < grad_deltas.size(); ++j)
        if (grad_deltas[j] > grad_deltas[best]) best = j;
    return grad_deltas[best] / (rates[best] * h0_norm);
}

LandscapeRecord landscape_metrics(const meta::MetaKnowledge& mk, meta::LearnerKind kind,
                                  const std::vector<tasks::Episode>& batch,
                                  const meta::InnerLoopConfig& cfg, long long iteration) {
    if (batch.empty()) throw std::invalid_argument("landscape_metrics: empty episode batch");

    constexpr int J = kLandscapeSweepPoints;
    std::vector<double> rates(J);
    for (int j = 0; j < J; ++j) rates[static_cast<size_t>(j)] = 0.5 * cfg.alpha * (j + 1);

    std::vector<double> loss_sum(J, 0.0), gradpred_sum(J, 0.0);
    double beta_sum = 0.0;
    int terms = 0;
    bool valid = true;

    for (const auto& ep : batch) {
        Graph g;
        meta::GraphModel gm = meta::to_graph(g, mk);
        meta::AdaptResult ar = meta::adapt(g, gm, ep, cfg, kind);

        for (const auto& step_model : ar.step_models) {
            meta::Model values = detach_model(step_model);
            auto [h0, loss0] = support_gradient(values, ep, cfg.bn_eps);
            (void)loss0;
            const double h0_norm = vec_norm(h0);
            if (h0_norm == 0.0) {
                valid = false;
                continue;
            }
            std::vector<double> deltas(J);
            for (int j = 0; j < J; ++j) {
                meta::Model probe = stepped(values, h0, rates[static_cast<size_t>(j)]);
                auto [hj, lossj] = support_gradient(probe, ep, cfg.bn_eps);
                loss_sum[static_cast<size_t>(j)] += lossj;
                std::vector<double> diff(hj.size());
                for (size_t i = 0; i < hj.size(); ++i) diff[i] = hj[i] - h0[i];
                deltas[static_cast<size_t>(j)] = vec_norm(diff);
                gradpred_sum[static_cast<size_t>(j)] += deltas[static_cast<size_t>(j)];
            }
            beta_sum += effective_beta(rates, deltas, h0_norm);
            ++terms;
        }
    }

    LandscapeRecord rec;
    rec.iteration = iteration;
    rec.valid = valid && terms > 0;
    if (terms > 0) {
        rec.loss_per_rate.resize(J);
        for (int j = 0; j < J; ++j) {
            rec.loss_per_rate[static_cast<size_t>(j)] = loss_sum[static_cast<size_t>(j)] / terms;
            gradpred_sum[static_cast<size_t>(j)] /= terms;
        }
        rec.loss_min = *std::min_element(rec.loss_per_rate.begin(), rec.loss_per_rate.end());
        rec.loss_max = *std::max_element(rec.loss_per_rate.begin(), rec.loss_per_rate.end());
        rec.gradpred_min = *std::min_element(gradpred_sum.begin(), gradpred_sum.end());
        rec.gradpred_max = *std::max_element(gradpred_sum.begin(), gradpred_sum.end());
        rec.effective_beta = beta_sum / terms;
    }
    return rec;
}

void write_gradnorm_csv(std::ostream& out, const std::vector<GradNormRecord>& records) {
    out << "iteration,conv1,conv2,conv3,conv4,classifier\n";
    for (const auto& r : records) {
        if (r.layer_norms.size() != static_cast<size_t>(nn::kNumBlocks) + 1)
            throw std::invalid_argument("write_gradnorm_csv: expected " +
                                        std::to_string(nn::kNumBlocks + 1) + " layer norms");
        out << r.iteration;
        for (double v : r.layer_norms) out << ',' << fmt(v);
        out << '\n';
    }
}

std::vector<GradNormRecord> read_gradnorm_csv(std::istream& in) {
    std::vector<GradNormRecord> records;
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("gradnorm CSV: missing header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != static_cast<size_t>(nn::kNumBlocks) + 2)
            throw std::invalid_argument("gradnorm CSV: bad column count in '" + line + "'");
        GradNormRecord r;
        r.iteration = std::stoll(f[0]);
        for (size_t i = 1; i < f.size(); ++i) r.layer_norms.push_back(parse_double(f[i]));
        records.push_back(std::move(r));
    }
    return records;
}

void write_cka_csv(std::ostream& out, const std::vector<CKARecord>& records) {
    out << "layer,mean_cka,ci95,n_tasks\n";
    for (const auto& r : records)
        out << r.layer << ',' << fmt(r.mean_cka) << ',' << fmt(r.ci95) << ',' << r.n_tasks << '\n';
}

std::vector<CKARecord> read_cka_csv(std::istream& in) {
    std::vector<CKARecord> records;
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("cka CSV: missing header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 4) throw std::invalid_argument("cka CSV: bad column count in '" + line + "'");
        CKARecord r;
        r.layer = std::stoi(f[0]);
        r.mean_cka = parse_double(f[1]);
        r.ci95 = parse_double(f[2]);
        r.n_tasks = std::stoi(f[3]);
        records.push_back(r);
    }
    return records;
}

void write_landscape_csv(std::ostream& out, const std::vector<LandscapeRecord>& records) {
    out << "iteration,loss_min,loss_max,gradpred_min,gradpred_max,effective_beta,valid";
    for (int j = 1; j <= kLandscapeSweepPoints; ++j) out << ",loss_rate" << j;
    out << '\n';
    for (const auto& r : records) {
        if (r.loss_per_rate.size() != static_cast<size_t>(kLandscapeSweepPoints))
            throw std::invalid_argument("write_landscape_csv: expected " +
                                        std::to_string(kLandscapeSweepPoints) + " sweep losses");
        out << r.iteration << ',' << fmt(r.loss_min) << ',' << fmt(r.loss_max) << ','
            << fmt(r.gradpred_min) << ',' << fmt(r.gradpred_max) << ',' << fmt(r.effective_beta)
            << ',' << (r.valid ? 1 : 0);
        for (double v : r.loss_per_rate) out << ',' << fmt(v);
        out << '\n';
    }
}

std::vector<LandscapeRecord> read_landscape_csv(std::istream& in) {
    std::vector<LandscapeRecord> records;
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("landscape CSV: missing header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 7 + static_cast<size_t>(kLandscapeSweepPoints))
            throw std::invalid_argument("landscape CSV: bad column count in '" + line + "'");
        LandscapeRecord r;
        r.iteration = std::stoll(f[0]);
        r.loss_min = parse_double(f[1]);
        r.loss_max = parse_double(f[2]);
        r.gradpred_min = parse_double(f[3]);
        r.gradpred_max = parse_double(f[4]);
        r.effective_beta = parse_double(f[5]);
        r.valid = std::stoi(f[6]) != 0;
        for (size_t i = 7; i < f.size(); ++i) r.loss_per_rate.push_back(parse_double(f[i]));
        records.push_back(std::move(r));
    }
    return records;
}

void write_embeddings_csv(std::ostream& out, const std::vector<EmbeddingRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("write_embeddings_csv: no rows");
    out << "sample_id,class";
    for (size_t i = 0; i < rows.front().feature.size(); ++i) out << ",f" << i;
    out << '\n';
    for (const auto& r : rows) {
        out << r.sample_id << ',' << r.label;
        for (double v : r.feature) out << ',' << fmt(v);
        out << '\n';
    }
}

}  // namespace cxgrad::analysis
