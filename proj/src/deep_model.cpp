#include "syscade/deep/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "syscade/deep/kernels.hpp"
#include "syscade/errors.hpp"
#include "syscade/rng.hpp"

namespace syscade::deep {

namespace {

// Small epsilon keeps batch norm an identity (within 1e-9) on inputs that
// already have zero mean and unit variance.
constexpr double kBnEps = 1e-10;
// Running-average update rate for batch-norm statistics.
constexpr double kBnMomentum = 0.1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_config(const DeepConfig& cfg) {
    if (cfg.vocab_size < 1 || cfg.embed_dim < 1 || cfg.conv_channels < 1 ||
        cfg.lstm_layers < 1 || cfg.lstm_hidden < 1 || cfg.max_seq_len < 1 ||
        cfg.atrous_kernel < 1) {
        throw ConfigError("all layer sizes must be positive");
    }
    if (cfg.kernel_sizes.empty()) throw ConfigError("at least one inception kernel required");
    for (int k : cfg.kernel_sizes) {
        if (k < 1 || k % 2 == 0) {
            throw ConfigError("inception kernel sizes must be odd for same-length padding");
        }
    }
    for (int r : cfg.atrous_dilations) {
        if (r < 1) throw ConfigError("dilation ratios must be >= 1");
    }
    for (int w : cfg.fc_sizes) {
        if (w < 1) throw ConfigError("fully connected widths must be positive");
    }
}

int concat_channels(const DeepConfig& cfg) {
    return cfg.conv_channels * static_cast<int>(cfg.kernel_sizes.size());
}

void fill_uniform(Tensor& t, double a, Rng& rng) {
    for (auto& v : t.data) v = a * (2.0 * rng.uniform() - 1.0);
}

// ---------------------------------------------------------------------------
// Masked batch norm over [B, T, C]: statistics use only positions with
// mask = 1; outputs at masked positions are forced to zero.

struct BnCache {
    Tensor xhat;                       // [B,T,C], zero at masked positions
    std::vector<double> invstd, mean, var;
    double count = 0.0;                // valid positions
};

void bn_forward_train(const Tensor& X, const Tensor& mask, const Tensor& gamma,
                      const Tensor& beta, Tensor& Y, BnCache& c) {
    const long B = X.shape[0], T = X.shape[1], C = X.shape[2];
    c.mean.assign(C, 0.0);
    c.var.assign(C, 0.0);
    c.invstd.assign(C, 0.0);
    c.xhat = Tensor({B, T, C});
    double count = 0.0;
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            if (mask.at(b, t) == 0.0) continue;
            count += 1.0;
            for (long ch = 0; ch < C; ++ch) c.mean[ch] += X.at(b, t, ch);
        }
    }
    if (count == 0.0) throw DataError("batch norm saw no valid positions");
    for (long ch = 0; ch < C; ++ch) c.mean[ch] /= count;
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            if (mask.at(b, t) == 0.0) continue;
            for (long ch = 0; ch < C; ++ch) {
                const double d = X.at(b, t, ch) - c.mean[ch];
                c.var[ch] += d * d;
            }
        }
    }
    for (long ch = 0; ch < C; ++ch) {
        c.var[ch] /= count;
        c.invstd[ch] = 1.0 / std::sqrt(c.var[ch] + kBnEps);
    }
    c.count = count;
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            if (mask.at(b, t) == 0.0) continue;
            for (long ch = 0; ch < C; ++ch) {
                const double xh = (X.at(b, t, ch) - c.mean[ch]) * c.invstd[ch];
                c.xhat.at(b, t, ch) = xh;
                Y.at(b, t, ch) = gamma.at(ch) * xh + beta.at(ch);
            }
        }
    }
}

void bn_forward_infer(const Tensor& X, const Tensor& mask, const Tensor& gamma,
                      const Tensor& beta, const Tensor& rmean, const Tensor& rvar,
                      Tensor& Y) {
    const long B = X.shape[0], T = X.shape[1], C = X.shape[2];
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            if (mask.at(b, t) == 0.0) continue;
            for (long ch = 0; ch < C; ++ch) {
                const double inv = 1.0 / std::sqrt(rvar.at(ch) + kBnEps);
                Y.at(b, t, ch) = gamma.at(ch) * (X.at(b, t, ch) - rmean.at(ch)) * inv +
                                 beta.at(ch);
            }
        }
    }
}

void bn_backward(const Tensor& dY, const BnCache& c, const Tensor& gamma, const Tensor& mask,
                 Tensor& dX, Tensor& dgamma, Tensor& dbeta) {
    const long B = dY.shape[0], T = dY.shape[1], C = dY.shape[2];
    std::vector<double> sum_dxhat(C, 0.0), sum_dxhat_xhat(C, 0.0);
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            if (mask.at(b, t) == 0.0) continue;
            for (long ch = 0; ch < C; ++ch) {
                const double dy = dY.at(b, t, ch);
                const double xh = c.xhat.at(b, t, ch);
                dgamma.at(ch) += dy * xh;
                dbeta.at(ch) += dy;
                const double dxh = dy * gamma.at(ch);
                sum_dxhat[ch] += dxh;
                sum_dxhat_xhat[ch] += dxh * xh;
            }
        }
    }
    const double n = c.count;
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t) {
            if (mask.at(b, t) == 0.0) continue;
            for (long ch = 0; ch < C; ++ch) {
                const double dxh = dY.at(b, t, ch) * gamma.at(ch);
                const double xh = c.xhat.at(b, t, ch);
                dX.at(b, t, ch) = (c.invstd[ch] / n) *
                                  (n * dxh - sum_dxhat[ch] - xh * sum_dxhat_xhat[ch]);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// One LSTM direction. Steps at or past a sample's valid length carry the
// state through unchanged, so padding cannot perturb the terminal states.

struct LstmDirCache {
    Tensor i, f, g, o, c, tanhc, h; // each [B,T,H]
};

void lstm_dir_forward(const Tensor& X, const std::vector<int>& len, const Tensor& wx,
                      const Tensor& wh, const Tensor& bias, bool reverse,
                      LstmDirCache& dc) {
    const long B = X.shape[0], T = X.shape[1], I = X.shape[2];
    const long H = wh.shape[1];
    for (auto* t : {&dc.i, &dc.f, &dc.g, &dc.o, &dc.c, &dc.tanhc, &dc.h}) {
        *t = Tensor({B, T, H});
    }
    std::vector<double> h_prev(H), c_prev(H), z(4 * H);
    for (long b = 0; b < B; ++b) {
        std::fill(h_prev.begin(), h_prev.end(), 0.0);
        std::fill(c_prev.begin(), c_prev.end(), 0.0);
        for (long s = 0; s < T; ++s) {
            const long t = reverse ? T - 1 - s : s;
            if (t >= len[b]) {
                for (long j = 0; j < H; ++j) {
                    dc.h.at(b, t, j) = h_prev[j];
                    dc.c.at(b, t, j) = c_prev[j];
                }
                continue;
            }
            for (long row = 0; row < 4 * H; ++row) {
                double acc = bias.at(row);
                for (long i = 0; i < I; ++i) acc += wx.at(row, i) * X.at(b, t, i);
                for (long j = 0; j < H; ++j) acc += wh.at(row, j) * h_prev[j];
                z[row] = acc;
            }
            for (long j = 0; j < H; ++j) {
                const double gi = sigmoid(z[j]);
                const double gf = sigmoid(z[H + j]);
                const double gg = std::tanh(z[2 * H + j]);
                const double go = sigmoid(z[3 * H + j]);
                const double cc = gf * c_prev[j] + gi * gg;
                const double th = std::tanh(cc);
                dc.i.at(b, t, j) = gi;
                dc.f.at(b, t, j) = gf;
                dc.g.at(b, t, j) = gg;
                dc.o.at(b, t, j) = go;
                dc.c.at(b, t, j) = cc;
                dc.tanhc.at(b, t, j) = th;
                dc.h.at(b, t, j) = go * th;
            }
            for (long j = 0; j < H; ++j) {
                h_prev[j] = dc.h.at(b, t, j);
                c_prev[j] = dc.c.at(b, t, j);
            }
        }
    }
}

void lstm_dir_backward(const Tensor& X, const std::vector<int>& len, const Tensor& wx,
                       const Tensor& wh, const LstmDirCache& dc, const Tensor& dh_ext,
                       bool reverse, Tensor& dX, Tensor& dwx, Tensor& dwh, Tensor& dbias) {
    const long B = X.shape[0], T = X.shape[1], I = X.shape[2];
    const long H = wh.shape[1];
    std::vector<double> dh(H), dc_carry(H), dh_carry(H), dz(4 * H);
    for (long b = 0; b < B; ++b) {
        std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
        std::fill(dc_carry.begin(), dc_carry.end(), 0.0);
        for (long s = 0; s < T; ++s) {
            // Reverse of the forward processing order.
            const long t = reverse ? s : T - 1 - s;
            for (long j = 0; j < H; ++j) dh[j] = dh_carry[j] + dh_ext.at(b, t, j);
            if (t >= len[b]) {
                dh_carry = dh;
                continue;
            }
            // Forward-order predecessor state of step t.
            const bool has_prev = reverse ? (t + 1 < len[b]) : (t > 0);
            const long tp = reverse ? t + 1 : t - 1;
            for (long row = 0; row < 4 * H; ++row) dz[row] = 0.0;
            for (long j = 0; j < H; ++j) {
                const double gi = dc.i.at(b, t, j);
                const double gf = dc.f.at(b, t, j);
                const double gg = dc.g.at(b, t, j);
                const double go = dc.o.at(b, t, j);
                const double th = dc.tanhc.at(b, t, j);
                const double c_prev = has_prev ? dc.c.at(b, tp, j) : 0.0;
                const double d_o = dh[j] * th;
                const double d_c = dc_carry[j] + dh[j] * go * (1.0 - th * th);
                const double d_f = d_c * c_prev;
                const double d_i = d_c * gg;
                const double d_g = d_c * gi;
                dz[j] = d_i * gi * (1.0 - gi);
                dz[H + j] = d_f * gf * (1.0 - gf);
                dz[2 * H + j] = d_g * (1.0 - gg * gg);
                dz[3 * H + j] = d_o * go * (1.0 - go);
                dc_carry[j] = d_c * gf;
            }
            for (long row = 0; row < 4 * H; ++row) {
                const double d = dz[row];
                if (d == 0.0) continue;
                dbias.at(row) += d;
                for (long i = 0; i < I; ++i) dwx.at(row, i) += d * X.at(b, t, i);
            }
            for (long j = 0; j < H; ++j) dh_carry[j] = 0.0;
            for (long row = 0; row < 4 * H; ++row) {
                const double d = dz[row];
                if (d == 0.0) continue;
                const double hp_scale = d;
                for (long j = 0; j < H; ++j) {
                    const double h_prev = has_prev ? dc.h.at(b, tp, j) : 0.0;
                    dwh.at(row, j) += hp_scale * h_prev;
                    dh_carry[j] += hp_scale * wh.at(row, j);
                }
            }
            for (long i = 0; i < I; ++i) {
                double acc = 0.0;
                for (long row = 0; row < 4 * H; ++row) acc += dz[row] * wx.at(row, i);
                dX.at(b, t, i) += acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Full forward cache.

struct Cache {
    long B = 0, T = 0;
    std::vector<int> len;
    Tensor mask;                    // [B,T]
    Tensor xemb;                    // [B,T,E]
    Tensor concat0;                 // [B,T,CC] inception output, pre-BN
    std::vector<BnCache> bn;
    std::vector<Tensor> bn_out;     // BN outputs, pre-ReLU, zero at masked
    std::vector<Tensor> act;        // masked ReLU outputs
    Tensor ld;                      // [B,T]
    Tensor proj;                    // [B,T,CC]
    Tensor fused;                   // [B,T,CC]
    struct LstmLayer {
        Tensor in;                  // [B,T,inl]
        LstmDirCache fwd, bwd;
        Tensor out;                 // [B,T,2H], masked
    };
    std::vector<LstmLayer> lstm;
    Tensor seqfeat;                 // [B,2H]
    Tensor sys_in;                  // [B,V]
    Tensor sys_pre;                 // [B,H]
    Tensor head_in;                 // [B,3H]
    std::vector<Tensor> fc_pre;     // [B,w]
    std::vector<Tensor> fc_act;
    Tensor logits;                  // [B,2]
    Tensor p;                       // [B,2]
};

void core_forward(const DeepModel& m, const std::vector<PreparedWindow>& batch, bool training,
                  Cache& c) {
    const DeepConfig& cfg = m.cfg;
    const long B = static_cast<long>(batch.size());
    const long T = cfg.max_seq_len, E = cfg.embed_dim, V = cfg.vocab_size;
    const long C = cfg.conv_channels, CC = concat_channels(cfg);
    const long H = cfg.lstm_hidden;
    if (B == 0) throw DataError("empty batch");

    c.B = B;
    c.T = T;
    c.len.resize(B);
    c.mask = Tensor({B, T});
    c.xemb = Tensor({B, T, E});
    const Tensor& embed = m.params.get("embed");
    for (long b = 0; b < B; ++b) {
        const auto& pw = batch[b];
        c.len[b] = pw.valid_len;
        for (long t = 0; t < pw.valid_len; ++t) {
            c.mask.at(b, t) = 1.0;
            const int idx = pw.indices[t];
            for (long e = 0; e < E; ++e) c.xemb.at(b, t, e) = embed.at(idx, e);
        }
    }

    // Inception branches into one concatenated channel block.
    c.concat0 = Tensor({B, T, CC});
    long ch_off = 0;
    for (int ks : cfg.kernel_sizes) {
        Tensor y({B, T, C});
        kernels::conv1d_forward(c.xemb, m.params.get("conv" + std::to_string(ks) + ".w"), y);
        for (long b = 0; b < B; ++b) {
            for (long t = 0; t < T; ++t) {
                for (long ch = 0; ch < C; ++ch) c.concat0.at(b, t, ch_off + ch) = y.at(b, t, ch);
            }
        }
        ch_off += C;
    }

    const int n_bn = 1 + static_cast<int>(cfg.atrous_dilations.size());
    c.bn.assign(n_bn, BnCache());
    c.bn_out.assign(n_bn, Tensor());
    c.act.assign(n_bn, Tensor());

    auto run_bn_relu = [&](int i, const Tensor& x) {
        c.bn_out[i] = Tensor({B, T, CC});
        const std::string tag = "bn" + std::to_string(i);
        if (training) {
            bn_forward_train(x, c.mask, m.params.get(tag + ".gamma"), m.params.get(tag + ".beta"),
                             c.bn_out[i], c.bn[i]);
        } else {
            bn_forward_infer(x, c.mask, m.params.get(tag + ".gamma"), m.params.get(tag + ".beta"),
                             m.buffers.get(tag + ".mean"), m.buffers.get(tag + ".var"),
                             c.bn_out[i]);
        }
        c.act[i] = Tensor({B, T, CC});
        for (long b = 0; b < B; ++b) {
            for (long t = 0; t < T; ++t) {
                if (c.mask.at(b, t) == 0.0) continue;
                for (long ch = 0; ch < CC; ++ch) {
                    c.act[i].at(b, t, ch) = std::max(0.0, c.bn_out[i].at(b, t, ch));
                }
            }
        }
    };

    run_bn_relu(0, c.concat0);
    for (size_t a = 0; a < cfg.atrous_dilations.size(); ++a) {
        Tensor y({B, T, CC});
        kernels::atrous_forward(c.act[a], m.params.get("atrous" + std::to_string(a + 1) + ".w"),
                                cfg.atrous_dilations[a], y);
        run_bn_relu(static_cast<int>(a) + 1, y);
    }

    // Density stream: log-scaled run lengths, projected per channel, fused
    // multiplicatively with the convolutional stream.
    c.ld = Tensor({B, T});
    c.proj = Tensor({B, T, CC});
    c.fused = Tensor({B, T, CC});
    const Tensor& dw = m.params.get("density.w");
    const Tensor& db = m.params.get("density.b");
    const Tensor& conv_stream = c.act.back();
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < c.len[b]; ++t) {
            c.ld.at(b, t) = batch[b].log_density[t];
            for (long ch = 0; ch < CC; ++ch) {
                const double p = dw.at(ch) * c.ld.at(b, t) + db.at(ch);
                c.proj.at(b, t, ch) = p;
                c.fused.at(b, t, ch) = conv_stream.at(b, t, ch) * p;
            }
        }
    }

    // BiLSTM stack.
    c.lstm.assign(cfg.lstm_layers, Cache::LstmLayer());
    const Tensor* layer_in = &c.fused;
    for (int l = 0; l < cfg.lstm_layers; ++l) {
        auto& L = c.lstm[l];
        L.in = *layer_in;
        const std::string base = "lstm" + std::to_string(l);
        lstm_dir_forward(L.in, c.len, m.params.get(base + ".fwd.wx"),
                         m.params.get(base + ".fwd.wh"), m.params.get(base + ".fwd.b"), false,
                         L.fwd);
        lstm_dir_forward(L.in, c.len, m.params.get(base + ".bwd.wx"),
                         m.params.get(base + ".bwd.wh"), m.params.get(base + ".bwd.b"), true,
                         L.bwd);
        L.out = Tensor({B, T, 2 * H});
        for (long b = 0; b < B; ++b) {
            for (long t = 0; t < c.len[b]; ++t) {
                for (long j = 0; j < H; ++j) {
                    L.out.at(b, t, j) = L.fwd.h.at(b, t, j);
                    L.out.at(b, t, H + j) = L.bwd.h.at(b, t, j);
                }
            }
        }
        layer_in = &L.out;
    }

    // Terminal states: forward direction at the last valid step, backward
    // direction at step 0.
    c.seqfeat = Tensor({B, 2 * H});
    const auto& top = c.lstm.back();
    for (long b = 0; b < B; ++b) {
        for (long j = 0; j < H; ++j) {
            c.seqfeat.at(b, j) = top.fwd.h.at(b, c.len[b] - 1, j);
            c.seqfeat.at(b, H + j) = top.bwd.h.at(b, 0, j);
        }
    }

    // System-frequency branch.
    c.sys_in = Tensor({B, V});
    for (long b = 0; b < B; ++b) {
        for (long v = 0; v < V; ++v) c.sys_in.at(b, v) = batch[b].sys_freq[v];
    }
    c.sys_pre = Tensor({B, H});
    kernels::dense_forward(c.sys_in, m.params.get("sys.w"), m.params.get("sys.b"), c.sys_pre);

    c.head_in = Tensor({B, 3 * H});
    for (long b = 0; b < B; ++b) {
        for (long j = 0; j < 2 * H; ++j) c.head_in.at(b, j) = c.seqfeat.at(b, j);
        for (long j = 0; j < H; ++j) {
            c.head_in.at(b, 2 * H + j) = std::max(0.0, c.sys_pre.at(b, j));
        }
    }

    const int n_fc = static_cast<int>(cfg.fc_sizes.size());
    c.fc_pre.assign(n_fc, Tensor());
    c.fc_act.assign(n_fc, Tensor());
    const Tensor* x = &c.head_in;
    for (int i = 0; i < n_fc; ++i) {
        const std::string base = "fc" + std::to_string(i);
        c.fc_pre[i] = Tensor({B, cfg.fc_sizes[i]});
        kernels::dense_forward(*x, m.params.get(base + ".w"), m.params.get(base + ".b"),
                               c.fc_pre[i]);
        c.fc_act[i] = c.fc_pre[i];
        for (auto& v : c.fc_act[i].data) v = std::max(0.0, v);
        x = &c.fc_act[i];
    }

    c.logits = Tensor({B, 2});
    kernels::dense_forward(*x, m.params.get("out.w"), m.params.get("out.b"), c.logits);

    c.p = Tensor({B, 2});
    for (long b = 0; b < B; ++b) {
        const double mx = std::max(c.logits.at(b, 0), c.logits.at(b, 1));
        const double e0 = std::exp(c.logits.at(b, 0) - mx);
        const double e1 = std::exp(c.logits.at(b, 1) - mx);
        c.p.at(b, 0) = e0 / (e0 + e1);
        c.p.at(b, 1) = e1 / (e0 + e1);
    }
}

double cross_entropy(const Cache& c, const std::vector<int>& labels) {
    if (static_cast<long>(labels.size()) != c.B) throw ShapeError("label count mismatch");
    double loss = 0.0;
    for (long b = 0; b < c.B; ++b) {
        if (labels[b] != 0 && labels[b] != 1) throw DataError("labels must be 0 or 1");
        loss -= std::log(std::max(c.p.at(b, labels[b]), 1e-300));
    }
    return loss / static_cast<double>(c.B);
}

void core_backward(const DeepModel& m, const std::vector<PreparedWindow>& batch,
                   const std::vector<int>& labels, const Cache& c, Registry& g) {
    const DeepConfig& cfg = m.cfg;
    const long B = c.B, T = c.T, E = cfg.embed_dim;
    const long C = cfg.conv_channels, CC = concat_channels(cfg);
    const long H = cfg.lstm_hidden;

    Tensor dlogits({B, 2});
    for (long b = 0; b < B; ++b) {
        dlogits.at(b, 0) = (c.p.at(b, 0) - (labels[b] == 0 ? 1.0 : 0.0)) / B;
        dlogits.at(b, 1) = (c.p.at(b, 1) - (labels[b] == 1 ? 1.0 : 0.0)) / B;
    }

    const int n_fc = static_cast<int>(cfg.fc_sizes.size());
    const Tensor& out_in = n_fc > 0 ? c.fc_act.back() : c.head_in;
    Tensor d_out_in({B, out_in.shape[1]});
    kernels::dense_backward(out_in, m.params.get("out.w"), dlogits, d_out_in, g.get("out.w"),
                            g.get("out.b"));

    Tensor* dx = &d_out_in;
    Tensor d_prev;
    for (int i = n_fc - 1; i >= 0; --i) {
        Tensor dz = *dx;
        for (long n = 0; n < dz.numel(); ++n) {
            if (c.fc_pre[i].at(n) <= 0.0) dz.at(n) = 0.0;
        }
        const Tensor& x_in = i > 0 ? c.fc_act[i - 1] : c.head_in;
        const std::string base = "fc" + std::to_string(i);
        d_prev = Tensor({B, x_in.shape[1]});
        kernels::dense_backward(x_in, m.params.get(base + ".w"), dz, d_prev, g.get(base + ".w"),
                                g.get(base + ".b"));
        dx = &d_prev;
    }

    // Split the head gradient into the sequence and system-frequency parts.
    Tensor dseqfeat({B, 2 * H});
    Tensor dsys_act({B, H});
    for (long b = 0; b < B; ++b) {
        for (long j = 0; j < 2 * H; ++j) dseqfeat.at(b, j) = dx->at(b, j);
        for (long j = 0; j < H; ++j) dsys_act.at(b, j) = dx->at(b, 2 * H + j);
    }

    Tensor dsys_pre = dsys_act;
    for (long b = 0; b < B; ++b) {
        for (long j = 0; j < H; ++j) {
            if (c.sys_pre.at(b, j) <= 0.0) dsys_pre.at(b, j) = 0.0;
        }
    }
    Tensor dsys_in({B, c.sys_in.shape[1]});
    kernels::dense_backward(c.sys_in, m.params.get("sys.w"), dsys_pre, dsys_in, g.get("sys.w"),
                            g.get("sys.b"));

    // BiLSTM stack, top down.
    Tensor d_layer_out; // gradient w.r.t. the masked output of the layer above
    for (int l = cfg.lstm_layers - 1; l >= 0; --l) {
        const auto& L = c.lstm[l];
        Tensor dh_fwd({B, T, H});
        Tensor dh_bwd({B, T, H});
        if (l == cfg.lstm_layers - 1) {
            for (long b = 0; b < B; ++b) {
                for (long j = 0; j < H; ++j) {
                    dh_fwd.at(b, c.len[b] - 1, j) = dseqfeat.at(b, j);
                    dh_bwd.at(b, 0, j) = dseqfeat.at(b, H + j);
                }
            }
        } else {
            for (long b = 0; b < B; ++b) {
                for (long t = 0; t < c.len[b]; ++t) {
                    for (long j = 0; j < H; ++j) {
                        dh_fwd.at(b, t, j) = d_layer_out.at(b, t, j);
                        dh_bwd.at(b, t, j) = d_layer_out.at(b, t, H + j);
                    }
                }
            }
        }
        Tensor d_in({B, T, L.in.shape[2]});
        const std::string base = "lstm" + std::to_string(l);
        lstm_dir_backward(L.in, c.len, m.params.get(base + ".fwd.wx"),
                          m.params.get(base + ".fwd.wh"), L.fwd, dh_fwd, false, d_in,
                          g.get(base + ".fwd.wx"), g.get(base + ".fwd.wh"),
                          g.get(base + ".fwd.b"));
        lstm_dir_backward(L.in, c.len, m.params.get(base + ".bwd.wx"),
                          m.params.get(base + ".bwd.wh"), L.bwd, dh_bwd, true, d_in,
                          g.get(base + ".bwd.wx"), g.get(base + ".bwd.wh"),
                          g.get(base + ".bwd.b"));
        d_layer_out = std::move(d_in);
    }
    Tensor& dfused = d_layer_out; // [B,T,CC]

    // Fusion: fused = act ⊙ proj.
    const Tensor& conv_stream = c.act.back();
    Tensor dact({B, T, CC});
    Tensor& d_dw = g.get("density.w");
    Tensor& d_db = g.get("density.b");
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < c.len[b]; ++t) {
            for (long ch = 0; ch < CC; ++ch) {
                const double df = dfused.at(b, t, ch);
                dact.at(b, t, ch) = df * c.proj.at(b, t, ch);
                const double dproj = df * conv_stream.at(b, t, ch);
                d_dw.at(ch) += dproj * c.ld.at(b, t);
                d_db.at(ch) += dproj;
            }
        }
    }

    // Atrous chain and inception block, in reverse.
    const int n_bn = 1 + static_cast<int>(cfg.atrous_dilations.size());
    Tensor d_current = std::move(dact); // gradient w.r.t. act[i]
    for (int i = n_bn - 1; i >= 0; --i) {
        Tensor dy = std::move(d_current);
        for (long n = 0; n < dy.numel(); ++n) {
            if (c.bn_out[i].at(n) <= 0.0) dy.at(n) = 0.0;
        }
        const std::string tag = "bn" + std::to_string(i);
        Tensor d_pre({B, T, CC});
        bn_backward(dy, c.bn[i], m.params.get(tag + ".gamma"), c.mask, d_pre,
                    g.get(tag + ".gamma"), g.get(tag + ".beta"));
        if (i > 0) {
            const std::string w = "atrous" + std::to_string(i) + ".w";
            d_current = Tensor({B, T, CC});
            kernels::atrous_backward(c.act[i - 1], m.params.get(w), cfg.atrous_dilations[i - 1],
                                     d_pre, d_current, g.get(w));
        } else {
            // Split the concat gradient back into branches.
            Tensor dxemb({B, T, E});
            long ch_off = 0;
            for (int ks : cfg.kernel_sizes) {
                Tensor dbranch({B, T, C});
                for (long b = 0; b < B; ++b) {
                    for (long t = 0; t < T; ++t) {
                        for (long ch = 0; ch < C; ++ch) {
                            dbranch.at(b, t, ch) = d_pre.at(b, t, ch_off + ch);
                        }
                    }
                }
                const std::string w = "conv" + std::to_string(ks) + ".w";
                Tensor dxb({B, T, E});
                kernels::conv1d_backward(c.xemb, m.params.get(w), dbranch, dxb, g.get(w));
                for (long n = 0; n < dxemb.numel(); ++n) dxemb.at(n) += dxb.at(n);
                ch_off += C;
            }
            Tensor& d_embed = g.get("embed");
            for (long b = 0; b < B; ++b) {
                for (long t = 0; t < c.len[b]; ++t) {
                    const int idx = batch[b].indices[t];
                    for (long e = 0; e < E; ++e) d_embed.at(idx, e) += dxemb.at(b, t, e);
                }
            }
        }
    }
}

void update_running_stats(DeepModel& m, const Cache& c) {
    const int n_bn = 1 + static_cast<int>(m.cfg.atrous_dilations.size());
    for (int i = 0; i < n_bn; ++i) {
        const std::string tag = "bn" + std::to_string(i);
        Tensor& rm = m.buffers.get(tag + ".mean");
        Tensor& rv = m.buffers.get(tag + ".var");
        for (long ch = 0; ch < rm.numel(); ++ch) {
            rm.at(ch) = (1.0 - kBnMomentum) * rm.at(ch) + kBnMomentum * c.bn[i].mean[ch];
            rv.at(ch) = (1.0 - kBnMomentum) * rv.at(ch) + kBnMomentum * c.bn[i].var[ch];
        }
    }
}

nlohmann::json config_to_json(const DeepConfig& cfg) {
    nlohmann::json j;
    j["vocab_size"] = cfg.vocab_size;
    j["embed_dim"] = cfg.embed_dim;
    j["conv_channels"] = cfg.conv_channels;
    j["kernel_sizes"] = cfg.kernel_sizes;
    j["atrous_dilations"] = cfg.atrous_dilations;
    j["atrous_kernel"] = cfg.atrous_kernel;
    j["lstm_layers"] = cfg.lstm_layers;
    j["lstm_hidden"] = cfg.lstm_hidden;
    j["fc_sizes"] = cfg.fc_sizes;
    j["max_seq_len"] = cfg.max_seq_len;
    j["seed"] = cfg.seed;
    return j;
}

DeepConfig config_from_json(const nlohmann::json& j) {
    DeepConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.conv_channels = j.at("conv_channels").get<int>();
    cfg.kernel_sizes = j.at("kernel_sizes").get<std::vector<int>>();
    cfg.atrous_dilations = j.at("atrous_dilations").get<std::vector<int>>();
    cfg.atrous_kernel = j.at("atrous_kernel").get<int>();
    cfg.lstm_layers = j.at("lstm_layers").get<int>();
    cfg.lstm_hidden = j.at("lstm_hidden").get<int>();
    cfg.fc_sizes = j.at("fc_sizes").get<std::vector<int>>();
    cfg.max_seq_len = j.at("max_seq_len").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

} // namespace

DeepModel deep_init(const DeepConfig& cfg) {
    check_config(cfg);
    DeepModel m;
    m.cfg = cfg;
    const long V = cfg.vocab_size, E = cfg.embed_dim, C = cfg.conv_channels;
    const long CC = concat_channels(cfg), H = cfg.lstm_hidden;
    const long Katr = cfg.atrous_kernel;

    std::uint64_t stream = 0;
    auto next_rng = [&]() { return Rng(derive_seed(cfg.seed, 0xDEE9 + stream++)); };
    auto glorot = [&](Tensor& t, long fan_in, long fan_out) {
        Rng rng = next_rng();
        fill_uniform(t, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
    };

    {
        Tensor& t = m.params.add("embed", {V, E});
        Rng rng = next_rng();
        fill_uniform(t, 1.0 / std::sqrt(static_cast<double>(E)), rng);
    }
    for (int ks : cfg.kernel_sizes) {
        glorot(m.params.add("conv" + std::to_string(ks) + ".w", {C, E, ks}), E * ks, C * ks);
    }
    const int n_bn = 1 + static_cast<int>(cfg.atrous_dilations.size());
    for (int i = 0; i < n_bn; ++i) {
        const std::string tag = "bn" + std::to_string(i);
        m.params.add(tag + ".gamma", {CC}).fill(1.0);
        m.params.add(tag + ".beta", {CC});
        m.buffers.add(tag + ".mean", {CC});
        m.buffers.add(tag + ".var", {CC}).fill(1.0);
    }
    for (size_t a = 0; a < cfg.atrous_dilations.size(); ++a) {
        glorot(m.params.add("atrous" + std::to_string(a + 1) + ".w", {CC, CC, Katr}),
               CC * Katr, CC * Katr);
    }
    m.params.add("density.w", {CC}).fill(1.0);
    m.params.add("density.b", {CC});
    for (int l = 0; l < cfg.lstm_layers; ++l) {
        const long in_l = l == 0 ? CC : 2 * H;
        for (const char* dir : {"fwd", "bwd"}) {
            const std::string base = "lstm" + std::to_string(l) + "." + dir;
            glorot(m.params.add(base + ".wx", {4 * H, in_l}), in_l, H);
            glorot(m.params.add(base + ".wh", {4 * H, H}), H, H);
            Tensor& b = m.params.add(base + ".b", {4 * H});
            // Forget-gate bias starts at 1 so early training does not
            // immediately flush the cell state.
            for (long j = H; j < 2 * H; ++j) b.at(j) = 1.0;
        }
    }
    glorot(m.params.add("sys.w", {H, V}), V, H);
    m.params.add("sys.b", {H});
    long prev = 3 * H;
    for (size_t i = 0; i < cfg.fc_sizes.size(); ++i) {
        const std::string base = "fc" + std::to_string(i);
        glorot(m.params.add(base + ".w", {cfg.fc_sizes[i], prev}), prev, cfg.fc_sizes[i]);
        m.params.add(base + ".b", {cfg.fc_sizes[i]});
        prev = cfg.fc_sizes[i];
    }
    glorot(m.params.add("out.w", {2, prev}), prev, 2);
    m.params.add("out.b", {2});
    return m;
}

PreparedWindow prepare_window(const CompressedWindow& w, const DeepConfig& cfg) {
    if (w.ngram_seq.empty()) throw DataError("window has no grams");
    if (static_cast<int>(w.sys_freq.size()) != cfg.vocab_size) {
        throw DataError("sys_freq length does not match the vocabulary");
    }
    PreparedWindow pw;
    const int T = cfg.max_seq_len;
    pw.valid_len = std::min<int>(T, static_cast<int>(w.ngram_seq.size()));
    pw.indices.assign(T, 0);
    pw.log_density.assign(T, 0.0);
    for (int t = 0; t < pw.valid_len; ++t) {
        const int idx = w.ngram_seq[t];
        if (idx < 0 || idx >= cfg.vocab_size) {
            throw DataError("gram index outside the vocabulary");
        }
        if (w.density_seq[t] < 0) throw DataError("negative run length");
        pw.indices[t] = idx;
        pw.log_density[t] = std::log1p(static_cast<double>(w.density_seq[t]));
    }
    pw.sys_freq = w.sys_freq;
    return pw;
}

std::vector<double> deep_forward(const DeepModel& m, const std::vector<PreparedWindow>& batch,
                                 bool training) {
    Cache c;
    core_forward(m, batch, training, c);
    std::vector<double> out(batch.size());
    for (size_t b = 0; b < batch.size(); ++b) out[b] = c.p.at(static_cast<long>(b), 1);
    return out;
}

double deep_loss(const DeepModel& m, const std::vector<PreparedWindow>& batch,
                 const std::vector<int>& labels) {
    Cache c;
    core_forward(m, batch, true, c);
    return cross_entropy(c, labels);
}

BackwardResult deep_backward(DeepModel& m, const std::vector<PreparedWindow>& batch,
                             const std::vector<int>& labels, bool update_running) {
    if (batch.size() != labels.size()) throw ShapeError("batch and label sizes differ");
    Cache c;
    core_forward(m, batch, true, c);
    BackwardResult r;
    r.loss = cross_entropy(c, labels);
    r.p.resize(batch.size());
    for (size_t b = 0; b < batch.size(); ++b) r.p[b] = c.p.at(static_cast<long>(b), 1);
    r.grads = m.params.zeros_like();
    core_backward(m, batch, labels, c, r.grads);
    if (update_running) update_running_stats(m, c);
    return r;
}

double deep_predict(const DeepModel& m, const CompressedWindow& w) {
    const std::vector<PreparedWindow> batch{prepare_window(w, m.cfg)};
    Cache c;
    core_forward(m, batch, false, c);
    return c.p.at(0, 1);
}

void masked_batch_norm(const Tensor& X, const Tensor& mask, const Tensor& gamma,
                       const Tensor& beta, Tensor& Y) {
    Y = Tensor({X.shape[0], X.shape[1], X.shape[2]});
    BnCache scratch;
    bn_forward_train(X, mask, gamma, beta, Y, scratch);
}

std::vector<double> deep_train(DeepModel& m, const std::vector<const CompressedWindow*>& windows,
                               const std::vector<int>& labels, const DeepTrainConfig& tc) {
    if (windows.empty() || windows.size() != labels.size()) {
        throw TrainError("training set empty or misaligned with labels");
    }
    if (tc.epochs < 0 || tc.batch_size < 1) throw ConfigError("invalid training schedule");

    std::vector<PreparedWindow> prepared;
    prepared.reserve(windows.size());
    for (const auto* w : windows) prepared.push_back(prepare_window(*w, m.cfg));

    const size_t n = prepared.size();
    std::vector<size_t> order(n);
    std::vector<double> velocity(static_cast<size_t>(m.params.total_size()), 0.0);
    std::vector<double> curve;
    curve.reserve(tc.epochs);

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        for (size_t i = 0; i < n; ++i) order[i] = i;
        Rng rng(derive_seed(tc.seed, 0x5EED + static_cast<std::uint64_t>(epoch)));
        for (size_t i = 0; i + 1 < n; ++i) {
            const size_t j = i + rng.uniform_int(n - i);
            std::swap(order[i], order[j]);
        }
        double epoch_loss = 0.0;
        double seen = 0.0;
        for (size_t start = 0; start < n; start += tc.batch_size) {
            const size_t end = std::min(n, start + tc.batch_size);
            std::vector<PreparedWindow> batch;
            std::vector<int> y;
            for (size_t i = start; i < end; ++i) {
                batch.push_back(prepared[order[i]]);
                y.push_back(labels[order[i]]);
            }
            BackwardResult r = deep_backward(m, batch, y, true);
            if (!std::isfinite(r.loss)) {
                throw TrainError("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(start / tc.batch_size));
            }
            const std::vector<double> grad = r.grads.flatten();
            std::vector<double> par = m.params.flatten();
            for (size_t i = 0; i < grad.size(); ++i) {
                velocity[i] = tc.momentum * velocity[i] + grad[i];
                par[i] -= tc.lr * velocity[i];
            }
            m.params.load_flat(par);
            epoch_loss += r.loss * static_cast<double>(end - start);
            seen += static_cast<double>(end - start);
        }
        curve.push_back(epoch_loss / seen);
    }
    return curve;
}

std::string slow_model_to_json(const SlowModel& m) {
    nlohmann::json j;
    j["format"] = "slow-model";
    j["version"] = 1;
    j["window"] = nlohmann::json::parse(window_config_to_json(m.window_cfg));
    j["vocab"] = nlohmann::json::parse(vocabulary_to_json(m.vocab));
    j["config"] = config_to_json(m.net.cfg);
    nlohmann::json params = nlohmann::json::object();
    for (size_t i = 0; i < m.net.params.count(); ++i) {
        params[m.net.params.name(i)] = m.net.params.tensor(i).data;
    }
    j["params"] = std::move(params);
    nlohmann::json buffers = nlohmann::json::object();
    for (size_t i = 0; i < m.net.buffers.count(); ++i) {
        buffers[m.net.buffers.name(i)] = m.net.buffers.tensor(i).data;
    }
    j["buffers"] = std::move(buffers);
    return j.dump();
}

SlowModel slow_model_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("slow model: invalid JSON");
    try {
        if (j.at("format").get<std::string>() != "slow-model") {
            throw ParseError("slow model: unexpected format tag");
        }
        SlowModel m;
        m.window_cfg = window_config_from_json(j.at("window").dump());
        m.vocab = vocabulary_from_json(j.at("vocab").dump());
        m.net = deep_init(config_from_json(j.at("config")));
        auto load_into = [](Registry& reg, const nlohmann::json& src) {
            for (size_t i = 0; i < reg.count(); ++i) {
                auto values = src.at(reg.name(i)).get<std::vector<double>>();
                Tensor& t = reg.tensor(i);
                if (values.size() != t.data.size()) {
                    throw ParseError("slow model: tensor size mismatch for " + reg.name(i));
                }
                t.data = std::move(values);
            }
        };
        load_into(m.net.params, j.at("params"));
        load_into(m.net.buffers, j.at("buffers"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("slow model: ") + e.what());
    }
}

void save_slow_model(const SlowModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open model file for writing: " + path);
    out << slow_model_to_json(m) << '\n';
}

SlowModel load_slow_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return slow_model_from_json(ss.str());
}

} // namespace syscade::deep
