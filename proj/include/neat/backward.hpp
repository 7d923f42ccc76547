#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "neat/forward.hpp"

namespace neat {

namespace detail {

// dx for out = g*(x-m)*rstd + b, given dn = dout*g (already scaled by gain).
// dx_i = rstd * (dn_i - mean(dn) - n_i * mean(dn*n)), n = (x-m)*rstd.
inline void layernorm_bwd_dx(const double* __restrict x, const double* __restrict dn,
                             double mean, double rstd, double* __restrict dx_accum, int n) {
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double ni = (x[i] - mean) * rstd;
        s1 += dn[i];
        s2 += dn[i] * ni;
    }
    s1 /= n;
    s2 /= n;
    for (int i = 0; i < n; ++i) {
        double ni = (x[i] - mean) * rstd;
        dx_accum[i] += rstd * (dn[i] - s1 - ni * s2);
    }
}

}  // namespace detail

// Reverse-mode pass over a cached SeqEval. Accumulates, into a flat gradient,
// d/dtheta of  sum_t weights[t] * log p(tokens[t] | tokens[<t]).
// weights[0] is ignored (BOS is never predicted). Scratch buffers live in the
// object so repeated calls do not allocate.
class BackwardPass {
public:
    void accumulate(const SeqEval& ev, const std::vector<double>& weights, GradVector& grad) {
        const ModelParams& p = ev.params();
        const ModelArch& a = p.arch();
        const ParamLayout& L = p.layout();
        if (weights.size() != static_cast<std::size_t>(ev.len()))
            throw DomainError("backward weight vector length mismatch");
        if (grad.size() != static_cast<std::size_t>(L.total))
            throw DomainError("gradient vector size mismatch");

        int last = -1;  // last predicting position with a nonzero weight
        for (int t = 1; t < ev.len(); ++t)
            if (weights[static_cast<std::size_t>(t)] != 0.0) last = t - 1;
        if (last < 0) return;
        const int n = last + 1;  // positions 0..last carry gradient

        const int d = a.dim, f = a.ffn_dim(), V = a.vocab, H = a.heads, hd = a.head_dim();
        const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
        const double* w = p.data();
        double* g = grad.data();
        resize(a);

        // head + final layernorm
        std::fill(dx_cur_.begin(), dx_cur_.begin() + static_cast<std::size_t>(n) * d, 0.0);
        for (int pos = 0; pos < n; ++pos) {
            const double gw = weights[static_cast<std::size_t>(pos) + 1];
            if (gw == 0.0) continue;
            const TokenId target = ev.tokens()[static_cast<std::size_t>(pos) + 1];
            const double* lg = ev.logits_at(pos);
            const double lse = ev.lse_at(pos);
            const double* fo = ev.lnf_out_.data() + static_cast<std::size_t>(pos) * d;
            std::fill(dvec_.begin(), dvec_.begin() + d, 0.0);
            for (int vtok = 0; vtok < V; ++vtok) {
                double dl = -gw * std::exp(lg[vtok] - lse);
                if (vtok == target) dl += gw;
                const double* hw = w + L.head_w + static_cast<std::int64_t>(vtok) * d;
                double* ghw = g + L.head_w + static_cast<std::int64_t>(vtok) * d;
                for (int i = 0; i < d; ++i) {
                    dvec_[static_cast<std::size_t>(i)] += dl * hw[i];
                    ghw[i] += dl * fo[i];
                }
                g[L.head_b + vtok] += dl;
            }
            // dvec_ = d wrt lnf_out; fold gain, collect lnf grads, push into dx
            const double* xf = ev.xs_[static_cast<std::size_t>(a.blocks)].data() + static_cast<std::size_t>(pos) * d;
            const double mean = ev.lnf_mean_[static_cast<std::size_t>(pos)];
            const double rstd = ev.lnf_rstd_[static_cast<std::size_t>(pos)];
            for (int i = 0; i < d; ++i) {
                double ni = (xf[i] - mean) * rstd;
                g[L.lnf_g + i] += dvec_[static_cast<std::size_t>(i)] * ni;
                g[L.lnf_b + i] += dvec_[static_cast<std::size_t>(i)];
                dn_[static_cast<std::size_t>(i)] = dvec_[static_cast<std::size_t>(i)] * w[L.lnf_g + i];
            }
            detail::layernorm_bwd_dx(xf, dn_.data(), mean, rstd,
                                     dx_cur_.data() + static_cast<std::size_t>(pos) * d, d);
        }

        for (int b = a.blocks - 1; b >= 0; --b) {
            const auto& o = L.block[static_cast<std::size_t>(b)];
            const SeqEval::BlockCache& c = ev.blocks_[static_cast<std::size_t>(b)];
            const std::size_t nd = static_cast<std::size_t>(n) * d;
            std::fill(dht_.begin(), dht_.begin() + nd, 0.0);
            std::fill(dcat_.begin(), dcat_.begin() + nd, 0.0);
            std::fill(dq_.begin(), dq_.begin() + nd, 0.0);
            std::fill(dk_.begin(), dk_.begin() + nd, 0.0);
            std::fill(dv_.begin(), dv_.begin() + nd, 0.0);
            std::fill(dx_prev_.begin(), dx_prev_.begin() + nd, 0.0);

            // MLP + second layernorm + residuals (per position)
            for (int pos = 0; pos < n; ++pos) {
                const double* dxout = dx_cur_.data() + static_cast<std::size_t>(pos) * d;
                double* dht = dht_.data() + static_cast<std::size_t>(pos) * d;
                for (int i = 0; i < d; ++i) dht[i] = dxout[i];

                const double* gu = c.gelu.data() + static_cast<std::size_t>(pos) * f;
                const double* u1 = c.fc1.data() + static_cast<std::size_t>(pos) * f;
                const double* tu = c.tanh_u.data() + static_cast<std::size_t>(pos) * f;
                // dgelu = fc2_w^T dxout ; weight grads for fc2
                std::fill(du_.begin(), du_.begin() + f, 0.0);
                for (int i = 0; i < d; ++i) {
                    const double di = dxout[i];
                    if (di == 0.0) continue;
                    const double* row = w + o.fc2_w + static_cast<std::int64_t>(i) * f;
                    double* grow = g + o.fc2_w + static_cast<std::int64_t>(i) * f;
                    for (int j = 0; j < f; ++j) {
                        du_[static_cast<std::size_t>(j)] += di * row[j];
                        grow[j] += di * gu[j];
                    }
                    g[o.fc2_b + i] += di;
                }
                // through GELU: g'(u) = 0.5(1+t) + 0.5 u (1-t^2) c (1+3a u^2)
                for (int j = 0; j < f; ++j) {
                    double u = u1[j], t = tu[j];
                    double dgelu_du = 0.5 * (1.0 + t)
                        + 0.5 * u * (1.0 - t * t) * detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * u * u);
                    du_[static_cast<std::size_t>(j)] *= dgelu_du;
                }
                // through fc1: dln2_out = fc1_w^T du ; weight grads
                const double* n2 = c.ln2_out.data() + static_cast<std::size_t>(pos) * d;
                std::fill(dvec_.begin(), dvec_.begin() + d, 0.0);
                for (int j = 0; j < f; ++j) {
                    const double dj = du_[static_cast<std::size_t>(j)];
                    if (dj == 0.0) continue;
                    const double* row = w + o.fc1_w + static_cast<std::int64_t>(j) * d;
                    double* grow = g + o.fc1_w + static_cast<std::int64_t>(j) * d;
                    for (int i = 0; i < d; ++i) {
                        dvec_[static_cast<std::size_t>(i)] += dj * row[i];
                        grow[i] += dj * n2[i];
                    }
                    g[o.fc1_b + j] += dj;
                }
                // second layernorm
                const double* ht = c.h.data() + static_cast<std::size_t>(pos) * d;
                const double mean = c.ln2_mean[static_cast<std::size_t>(pos)];
                const double rstd = c.ln2_rstd[static_cast<std::size_t>(pos)];
                for (int i = 0; i < d; ++i) {
                    double ni = (ht[i] - mean) * rstd;
                    g[o.ln2_g + i] += dvec_[static_cast<std::size_t>(i)] * ni;
                    g[o.ln2_b + i] += dvec_[static_cast<std::size_t>(i)];
                    dn_[static_cast<std::size_t>(i)] = dvec_[static_cast<std::size_t>(i)] * w[o.ln2_g + i];
                }
                detail::layernorm_bwd_dx(ht, dn_.data(), mean, rstd, dht, d);

                // attention output projection: attout = wo*cat + bo, ht = xin + attout
                const double* cat = c.attcat.data() + static_cast<std::size_t>(pos) * d;
                double* dcat = dcat_.data() + static_cast<std::size_t>(pos) * d;
                for (int i = 0; i < d; ++i) {
                    const double di = dht[i];
                    if (di == 0.0) continue;
                    const double* row = w + o.wo + static_cast<std::int64_t>(i) * d;
                    double* grow = g + o.wo + static_cast<std::int64_t>(i) * d;
                    for (int j = 0; j < d; ++j) {
                        dcat[j] += di * row[j];
                        grow[j] += di * cat[j];
                    }
                    g[o.bo + i] += di;
                }
                // residual into block input
                double* dxin = dx_prev_.data() + static_cast<std::size_t>(pos) * d;
                for (int i = 0; i < d; ++i) dxin[i] += dht[i];
            }

            // attention core (couples positions through K and V)
            for (int pos = 0; pos < n; ++pos) {
                const double* dcat = dcat_.data() + static_cast<std::size_t>(pos) * d;
                const double* att_row = c.att.data() + SeqEval::att_offset(pos, H);
                const double* q = c.q.data() + static_cast<std::size_t>(pos) * d;
                double* dqp = dq_.data() + static_cast<std::size_t>(pos) * d;
                for (int h = 0; h < H; ++h) {
                    const int ho = h * hd;
                    const double* alpha = att_row + static_cast<std::size_t>(h) * (pos + 1);
                    // dalpha_u = dcat . v_u ; dv_u += alpha_u * dcat
                    double dot = 0.0;
                    for (int u = 0; u <= pos; ++u) {
                        const double* vu = c.v.data() + static_cast<std::size_t>(u) * d + ho;
                        double* dvu = dv_.data() + static_cast<std::size_t>(u) * d + ho;
                        double da = 0.0;
                        for (int j = 0; j < hd; ++j) {
                            da += dcat[ho + j] * vu[j];
                            dvu[j] += alpha[u] * dcat[ho + j];
                        }
                        dalpha_[static_cast<std::size_t>(u)] = da;
                        dot += alpha[u] * da;
                    }
                    for (int u = 0; u <= pos; ++u) {
                        const double ds = alpha[u] * (dalpha_[static_cast<std::size_t>(u)] - dot) * inv_sqrt_hd;
                        if (ds == 0.0) continue;
                        const double* ku = c.k.data() + static_cast<std::size_t>(u) * d + ho;
                        double* dku = dk_.data() + static_cast<std::size_t>(u) * d + ho;
                        for (int j = 0; j < hd; ++j) {
                            dqp[ho + j] += ds * ku[j];
                            dku[j] += ds * q[ho + j];
                        }
                    }
                }
            }

            // project q/k/v gradients back through the linear maps and first layernorm
            for (int pos = 0; pos < n; ++pos) {
                const double* n1 = c.ln1_out.data() + static_cast<std::size_t>(pos) * d;
                std::fill(dvec_.begin(), dvec_.begin() + d, 0.0);
                accum_linear_bwd(g, w, o.wq, o.bq, dq_.data() + static_cast<std::size_t>(pos) * d, n1, d);
                accum_linear_bwd(g, w, o.wk, o.bk, dk_.data() + static_cast<std::size_t>(pos) * d, n1, d);
                accum_linear_bwd(g, w, o.wv, o.bv, dv_.data() + static_cast<std::size_t>(pos) * d, n1, d);

                const double* xin = ev.xs_[static_cast<std::size_t>(b)].data() + static_cast<std::size_t>(pos) * d;
                const double mean = c.ln1_mean[static_cast<std::size_t>(pos)];
                const double rstd = c.ln1_rstd[static_cast<std::size_t>(pos)];
                for (int i = 0; i < d; ++i) {
                    double ni = (xin[i] - mean) * rstd;
                    g[o.ln1_g + i] += dvec_[static_cast<std::size_t>(i)] * ni;
                    g[o.ln1_b + i] += dvec_[static_cast<std::size_t>(i)];
                    dn_[static_cast<std::size_t>(i)] = dvec_[static_cast<std::size_t>(i)] * w[o.ln1_g + i];
                }
                detail::layernorm_bwd_dx(xin, dn_.data(), mean, rstd,
                                         dx_prev_.data() + static_cast<std::size_t>(pos) * d, d);
            }
            dx_cur_.swap(dx_prev_);
        }

        // embeddings
        for (int pos = 0; pos < n; ++pos) {
            const double* dx = dx_cur_.data() + static_cast<std::size_t>(pos) * d;
            double* gte = g + L.tok_emb + static_cast<std::int64_t>(ev.tokens()[static_cast<std::size_t>(pos)]) * d;
            double* gpe = g + L.pos_emb + static_cast<std::int64_t>(pos) * d;
            for (int i = 0; i < d; ++i) {
                gte[i] += dx[i];
                gpe[i] += dx[i];
            }
        }
    }

private:
    // for y = W x + b: given dy, accumulate dW, db into grad and W^T dy into dvec_
    void accum_linear_bwd(double* g, const double* w, std::int64_t w_off, std::int64_t b_off,
                          const double* dy, const double* x, int d) {
        for (int i = 0; i < d; ++i) {
            const double di = dy[i];
            if (di == 0.0) continue;
            const double* row = w + w_off + static_cast<std::int64_t>(i) * d;
            double* grow = g + w_off + static_cast<std::int64_t>(i) * d;
            for (int j = 0; j < d; ++j) {
                dvec_[static_cast<std::size_t>(j)] += di * row[j];
                grow[j] += di * x[j];
            }
            g[b_off + i] += di;
        }
    }

    void resize(const ModelArch& a) {
        const std::size_t td = static_cast<std::size_t>(a.max_seq) * a.dim;
        if (dx_cur_.size() != td) {
            dx_cur_.resize(td);
            dx_prev_.resize(td);
            dht_.resize(td);
            dcat_.resize(td);
            dq_.resize(td);
            dk_.resize(td);
            dv_.resize(td);
            du_.resize(static_cast<std::size_t>(a.ffn_dim()));
            dvec_.resize(static_cast<std::size_t>(a.dim));
            dn_.resize(static_cast<std::size_t>(a.dim));
            dalpha_.resize(static_cast<std::size_t>(a.max_seq));
        }
    }

    std::vector<double> dx_cur_, dx_prev_, dht_, dcat_, dq_, dk_, dv_;
    std::vector<double> du_, dvec_, dn_, dalpha_;
};

}  // namespace neat
