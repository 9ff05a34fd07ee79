#include <phaco/lssat.hpp>

#include <phaco/error.hpp>
#include <phaco/kernels.hpp>
#include <phaco/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

namespace phaco {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kLogFloor = 1e-12;

// ---------------------------------------------------------------- matrices

Mat mul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw Error(ErrorCode::ShapeMismatch, "matmul inner dims differ");
    Mat c(a.rows, b.cols);
    kernels::matmul(a.a.data(), b.a.data(), c.a.data(), a.rows, a.cols, b.cols);
    return c;
}

Mat transposed(const Mat& m) {
    Mat t(m.cols, m.rows);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) t.at(c, r) = m.at(r, c);
    return t;
}

// a * b^T
Mat mul_nt(const Mat& a, const Mat& b) {
    if (a.cols != b.cols) throw Error(ErrorCode::ShapeMismatch, "matmul_nt inner dims differ");
    return mul(a, transposed(b));
}

// acc += a^T * b
void add_mul_tn(Mat& acc, const Mat& a, const Mat& b) {
    if (a.rows != b.rows || acc.rows != a.cols || acc.cols != b.cols)
        throw Error(ErrorCode::ShapeMismatch, "matmul_tn dims differ");
    for (int i = 0; i < a.rows; ++i)
        for (int r = 0; r < a.cols; ++r) kernels::axpy(acc.row(r), a.at(i, r), b.row(i), b.cols);
}

void add_inplace(Mat& a, const Mat& b) {
    for (size_t i = 0; i < a.a.size(); ++i) a.a[i] += b.a[i];
}

void append_row(Mat& m, const double* src, int cols) {
    if (m.rows == 0) m.cols = cols;
    m.a.insert(m.a.end(), src, src + cols);
    ++m.rows;
}

void drop_first_row(Mat& m) {
    m.a.erase(m.a.begin(), m.a.begin() + m.cols);
    --m.rows;
}

// ------------------------------------------------------ layer norm, softmax

struct LnCache {
    Mat y; // normalized rows
    std::vector<double> inv_sigma;
};

void ln_rows(const Mat& x, LnCache& out) {
    out.y = Mat(x.rows, x.cols);
    out.inv_sigma.resize(x.rows);
    const int d = x.cols;
    for (int r = 0; r < x.rows; ++r) {
        const double* src = x.row(r);
        double mean = 0;
        for (int j = 0; j < d; ++j) mean += src[j];
        mean /= d;
        double var = 0;
        for (int j = 0; j < d; ++j) var += (src[j] - mean) * (src[j] - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        out.inv_sigma[r] = inv;
        double* dst = out.y.row(r);
        for (int j = 0; j < d; ++j) dst[j] = (src[j] - mean) * inv;
    }
}

// dx = (1/sigma) * (dy - mean(dy) - y * mean(dy . y)), rowwise.
Mat ln_backward(const LnCache& c, const Mat& dy) {
    Mat dx(dy.rows, dy.cols);
    const int d = dy.cols;
    for (int r = 0; r < dy.rows; ++r) {
        const double* g = dy.row(r);
        const double* y = c.y.row(r);
        double m1 = 0, m2 = 0;
        for (int j = 0; j < d; ++j) {
            m1 += g[j];
            m2 += g[j] * y[j];
        }
        m1 /= d;
        m2 /= d;
        double* dst = dx.row(r);
        for (int j = 0; j < d; ++j) dst[j] = c.inv_sigma[r] * (g[j] - m1 - y[j] * m2);
    }
    return dx;
}

// In-place softmax over logits[0..len); the rest of the row stays zero.
void softmax_span(double* v, int len) {
    double mx = v[0];
    for (int j = 1; j < len; ++j) mx = std::max(mx, v[j]);
    double sum = 0;
    for (int j = 0; j < len; ++j) {
        v[j] = std::exp(v[j] - mx);
        sum += v[j];
    }
    for (int j = 0; j < len; ++j) v[j] /= sum;
}

// --------------------------------------------------------------- attention

struct AttnTape {
    bool shared = false; // context aliases the query input (self-attention)
    LnCache xn, cn;
    Mat q, k, v;
    std::vector<Mat> attn; // per head, queries x context
    Mat concat;
};

void check_layer_shapes(const AttnLayer& w, int d) {
    for (const Mat* m : {&w.wq, &w.wk, &w.wv, &w.wo})
        if (m->rows != d || m->cols != d)
            throw Error(ErrorCode::ShapeMismatch, "attention projection is not d x d");
}

Mat attn_forward(const Mat& x, const Mat& ctx, const AttnLayer& w, int heads, bool causal,
                 bool literal, bool shared, AttnTape* tape) {
    const int n = x.rows, m = ctx.rows, d = x.cols;
    if (n < 1 || m < 1) throw Error(ErrorCode::ShapeMismatch, "attention needs >= 1 row");
    if (ctx.cols != d) throw Error(ErrorCode::ShapeMismatch, "query/context widths differ");
    if (literal) {
        // The bare equation: softmax(x ctx^T / sqrt(d)) ctx.
        Mat logits = mul_nt(x, ctx);
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        for (double& v : logits.a) v *= scale;
        for (int i = 0; i < n; ++i) softmax_span(logits.row(i), m);
        return mul(logits, ctx);
    }
    check_layer_shapes(w, d);
    if (heads < 1 || d % heads != 0)
        throw Error(ErrorCode::InvalidConfig, "head count must divide the feature width");
    if (causal && n != m)
        throw Error(ErrorCode::ShapeMismatch, "causal attention needs square attention");

    AttnTape local;
    AttnTape& t = tape ? *tape : local;
    t.shared = shared;
    ln_rows(x, t.xn);
    if (!shared) ln_rows(ctx, t.cn);
    const Mat& kv_src = shared ? t.xn.y : t.cn.y;
    t.q = mul(t.xn.y, w.wq);
    t.k = mul(kv_src, w.wk);
    t.v = mul(kv_src, w.wv);

    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    t.concat = Mat(n, d);
    t.attn.assign(heads, Mat(n, m));
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        Mat& A = t.attn[h];
        for (int i = 0; i < n; ++i) {
            const int limit = causal ? i + 1 : m;
            double* arow = A.row(i);
            for (int j = 0; j < limit; ++j)
                arow[j] = scale * kernels::dot(t.q.row(i) + off, t.k.row(j) + off, dh);
            softmax_span(arow, limit);
            double* orow = t.concat.row(i) + off;
            for (int j = 0; j < limit; ++j) kernels::axpy(orow, arow[j], t.v.row(j) + off, dh);
        }
    }
    Mat out = mul(t.concat, w.wo);
    add_inplace(out, x); // residual
    return out;
}

// dout -> dx (always) and dctx (when not shared); weight grads accumulate.
void attn_backward(const AttnTape& t, const AttnLayer& w, int heads, bool causal, const Mat& dout,
                   Mat& dx, Mat* dctx, AttnLayer& g) {
    const int n = dout.rows, d = dout.cols, m = t.k.rows;
    add_inplace(dx, dout); // residual path

    Mat dconcat = mul_nt(dout, w.wo);
    add_mul_tn(g.wo, t.concat, dout);

    Mat dq(n, d), dk(m, d), dv(m, d);
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> dA(m);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        const Mat& A = t.attn[h];
        for (int i = 0; i < n; ++i) {
            const int limit = causal ? i + 1 : m;
            const double* doh = dconcat.row(i) + off;
            const double* arow = A.row(i);
            double dot_ap = 0;
            for (int j = 0; j < limit; ++j) {
                dA[j] = kernels::dot(doh, t.v.row(j) + off, dh);
                dot_ap += dA[j] * arow[j];
            }
            for (int j = 0; j < limit; ++j) {
                const double dz = arow[j] * (dA[j] - dot_ap);
                kernels::axpy(dv.row(j) + off, arow[j], doh, dh);
                kernels::axpy(dq.row(i) + off, dz * scale, t.k.row(j) + off, dh);
                kernels::axpy(dk.row(j) + off, dz * scale, t.q.row(i) + off, dh);
            }
        }
    }
    Mat dxn = mul_nt(dq, w.wq);
    add_mul_tn(g.wq, t.xn.y, dq);
    const Mat& kv_src = t.shared ? t.xn.y : t.cn.y;
    Mat dcn = mul_nt(dk, w.wk);
    add_inplace(dcn, mul_nt(dv, w.wv));
    add_mul_tn(g.wk, kv_src, dk);
    add_mul_tn(g.wv, kv_src, dv);
    if (t.shared) {
        add_inplace(dxn, dcn);
        add_inplace(dx, ln_backward(t.xn, dxn));
    } else {
        add_inplace(dx, ln_backward(t.xn, dxn));
        add_inplace(*dctx, ln_backward(t.cn, dcn));
    }
}

// Single query row against projected K/V caches; writes the pre-output
// concat (no residual, no output projection).
void attend_cached(const double* q, const Mat& K, const Mat& V, int heads, double* concat,
                   std::vector<double>& scratch) {
    const int d = K.cols, rows = K.rows;
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    scratch.resize(rows);
    std::fill(concat, concat + d, 0.0);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int j = 0; j < rows; ++j)
            scratch[j] = scale * kernels::dot(q + off, K.row(j) + off, dh);
        softmax_span(scratch.data(), rows);
        for (int j = 0; j < rows; ++j)
            kernels::axpy(concat + off, scratch[j], V.row(j) + off, dh);
    }
}

// ------------------------------------------------------------ housekeeping

void validate_config(const LsSatConfig& c) {
    if (c.d_raw < 1 || c.kappa < 1 || c.d_raw % c.kappa != 0)
        throw Error(ErrorCode::InvalidConfig, "reduction factor must divide the raw width");
    if (c.d_sf() % c.heads != 0 || c.heads < 1)
        throw Error(ErrorCode::InvalidConfig, "head count must divide the reduced width");
    if (c.k_s < 2) throw Error(ErrorCode::InvalidConfig, "need at least two phases");
    if (c.tau < 1) throw Error(ErrorCode::InvalidConfig, "short window must be >= 1");
    if (c.n_self < 1 || c.n_cross < 1)
        throw Error(ErrorCode::InvalidConfig, "layer counts must be >= 1");
}

LsSatWeights sized_weights(const LsSatConfig& cfg) {
    validate_config(cfg);
    const int d = cfg.d_sf();
    LsSatWeights w;
    w.cfg = cfg;
    w.reduce_w = Mat(cfg.d_raw, d);
    w.reduce_b = Mat(1, d);
    auto stack = [&](int layers) {
        std::vector<AttnLayer> s(layers);
        for (auto& l : s) {
            l.wq = Mat(d, d);
            l.wk = Mat(d, d);
            l.wv = Mat(d, d);
            l.wo = Mat(d, d);
        }
        return s;
    };
    w.long_self = stack(cfg.n_self);
    w.short_self = stack(cfg.n_self);
    w.ls_cross = stack(cfg.n_cross);
    w.st_cross = stack(cfg.n_cross);
    w.head_w = Mat(d, cfg.k_s);
    return w;
}

LsSatWeights zeros_like(const LsSatWeights& w) { return sized_weights(w.cfg); }

std::vector<double> softmax_vec(const Mat& logits) {
    std::vector<double> p(logits.a);
    softmax_span(p.data(), static_cast<int>(p.size()));
    return p;
}

// --------------------------------------------------- batch sequence forward

struct LsFrameTape {
    LnCache xn;
    Mat q;
    std::vector<Mat> attn; // per head, window x prefix
    Mat concat;
};

struct FrameTape {
    int t0 = 0;
    std::vector<AttnTape> short_tapes;
    std::vector<LsFrameTape> ls_tapes;
    std::vector<AttnTape> st_tapes;
    Mat q_final; // 1 x d, head input
    std::vector<double> probs;
};

struct SeqTape {
    Mat s_sf;
    std::vector<AttnTape> long_tapes;
    LnCache lnl;
    std::vector<Mat> ls_k, ls_v; // per ls layer, full sequence
    std::vector<FrameTape> frames;
};

// Long-short cross layer over a fixed K/V prefix; mirrors attn_forward but
// keeps the hoisted context projections.
Mat ls_cross_forward(const Mat& x, const Mat& K, const Mat& V, int prefix, const AttnLayer& w,
                     int heads, LsFrameTape* tape) {
    const int n = x.rows, d = x.cols;
    LsFrameTape local;
    LsFrameTape& t = tape ? *tape : local;
    ln_rows(x, t.xn);
    t.q = mul(t.xn.y, w.wq);
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    t.concat = Mat(n, d);
    t.attn.assign(heads, Mat(n, prefix));
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        Mat& A = t.attn[h];
        for (int i = 0; i < n; ++i) {
            double* arow = A.row(i);
            for (int j = 0; j < prefix; ++j)
                arow[j] = scale * kernels::dot(t.q.row(i) + off, K.row(j) + off, dh);
            softmax_span(arow, prefix);
            double* orow = t.concat.row(i) + off;
            for (int j = 0; j < prefix; ++j) kernels::axpy(orow, arow[j], V.row(j) + off, dh);
        }
    }
    Mat out = mul(t.concat, w.wo);
    add_inplace(out, x);
    return out;
}

void ls_cross_backward(const LsFrameTape& t, const Mat& K, const Mat& V, int prefix,
                       const AttnLayer& w, int heads, const Mat& dout, Mat& dx, Mat& dK, Mat& dV,
                       AttnLayer& g) {
    const int n = dout.rows, d = dout.cols;
    add_inplace(dx, dout);
    Mat dconcat = mul_nt(dout, w.wo);
    add_mul_tn(g.wo, t.concat, dout);
    Mat dq(n, d);
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> dA(prefix);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        const Mat& A = t.attn[h];
        for (int i = 0; i < n; ++i) {
            const double* doh = dconcat.row(i) + off;
            const double* arow = A.row(i);
            double dot_ap = 0;
            for (int j = 0; j < prefix; ++j) {
                dA[j] = kernels::dot(doh, V.row(j) + off, dh);
                dot_ap += dA[j] * arow[j];
            }
            for (int j = 0; j < prefix; ++j) {
                const double dz = arow[j] * (dA[j] - dot_ap);
                kernels::axpy(dV.row(j) + off, arow[j], doh, dh);
                kernels::axpy(dq.row(i) + off, dz * scale, K.row(j) + off, dh);
                kernels::axpy(dK.row(j) + off, dz * scale, t.q.row(i) + off, dh);
            }
        }
    }
    Mat dxn = mul_nt(dq, w.wq);
    add_mul_tn(g.wq, t.xn.y, dq);
    add_inplace(dx, ln_backward(t.xn, dxn));
}

void forward_sequence(const LsSatWeights& w, const Mat& raw, SeqTape* tape,
                      std::vector<PhaseProbabilities>* out) {
    const LsSatConfig& cfg = w.cfg;
    validate_config(cfg);
    if (raw.cols != cfg.d_raw)
        throw Error(ErrorCode::ShapeMismatch, "raw feature width != d_raw");
    if (raw.rows < 1) throw Error(ErrorCode::ShapeMismatch, "empty sequence");
    const int T = raw.rows, d = cfg.d_sf();

    Mat s_sf = mul(raw, w.reduce_w);
    for (int t = 0; t < T; ++t) kernels::axpy(s_sf.row(t), 1.0, w.reduce_b.row(0), d);

    SeqTape local;
    SeqTape& tp = tape ? *tape : local;
    if (tape) {
        tp.s_sf = s_sf;
        tp.long_tapes.resize(cfg.n_self);
        tp.frames.resize(T);
    }

    Mat L = s_sf;
    for (int i = 0; i < cfg.n_self; ++i)
        L = attn_forward(L, L, w.long_self[i], cfg.heads, /*causal=*/true, false, /*shared=*/true,
                         tape ? &tp.long_tapes[i] : nullptr);
    ln_rows(L, tp.lnl);
    tp.ls_k.resize(cfg.n_cross);
    tp.ls_v.resize(cfg.n_cross);
    for (int j = 0; j < cfg.n_cross; ++j) {
        tp.ls_k[j] = mul(tp.lnl.y, w.ls_cross[j].wk);
        tp.ls_v[j] = mul(tp.lnl.y, w.ls_cross[j].wv);
    }

    if (out) out->resize(T);
    for (int t = 0; t < T; ++t) {
        FrameTape scratch;
        FrameTape& f = tape ? tp.frames[t] : scratch;
        f.t0 = std::max(0, t - cfg.tau + 1);
        const int wlen = t - f.t0 + 1;
        if (tape) {
            f.short_tapes.resize(cfg.n_self);
            f.ls_tapes.resize(cfg.n_cross);
            f.st_tapes.resize(cfg.n_cross);
        }
        Mat X(wlen, d);
        std::copy(s_sf.row(f.t0), s_sf.row(f.t0) + static_cast<size_t>(wlen) * d, X.a.begin());
        for (int i = 0; i < cfg.n_self; ++i)
            X = attn_forward(X, X, w.short_self[i], cfg.heads, true, false, true,
                             tape ? &f.short_tapes[i] : nullptr);
        for (int j = 0; j < cfg.n_cross; ++j)
            X = ls_cross_forward(X, tp.ls_k[j], tp.ls_v[j], t + 1, w.ls_cross[j], cfg.heads,
                                 tape ? &f.ls_tapes[j] : nullptr);
        Mat q(1, d);
        std::copy(s_sf.row(t), s_sf.row(t) + d, q.a.begin());
        for (int j = 0; j < cfg.n_cross; ++j)
            q = attn_forward(q, X, w.st_cross[j], cfg.heads, false, false, false,
                             tape ? &f.st_tapes[j] : nullptr);
        f.q_final = q;
        f.probs = softmax_vec(mul(q, w.head_w));
        if (out) (*out)[t].probs = f.probs;
    }
}

} // namespace

// ----------------------------------------------------------- public pieces

int PhaseProbabilities::argmax() const {
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

LsSatWeights init_weights(const LsSatConfig& cfg, std::uint64_t seed) {
    LsSatWeights w = sized_weights(cfg);
    rng::Xoshiro256pp g(seed);
    for_each_tensor(w, [&](const std::string& name, Mat& m) {
        if (name == "reduce.b") return; // biases start at zero
        const double scale = 1.0 / std::sqrt(static_cast<double>(m.rows));
        for (double& v : m.a) v = scale * g.gaussian();
    });
    return w;
}

void for_each_tensor(LsSatWeights& w,
                     const std::function<void(const std::string&, Mat&)>& fn) {
    fn("reduce.w", w.reduce_w);
    fn("reduce.b", w.reduce_b);
    auto stack = [&](const char* prefix, std::vector<AttnLayer>& layers) {
        for (size_t i = 0; i < layers.size(); ++i) {
            const std::string base = std::string(prefix) + "." + std::to_string(i) + ".";
            fn(base + "wq", layers[i].wq);
            fn(base + "wk", layers[i].wk);
            fn(base + "wv", layers[i].wv);
            fn(base + "wo", layers[i].wo);
        }
    };
    stack("long_self", w.long_self);
    stack("short_self", w.short_self);
    stack("ls_cross", w.ls_cross);
    stack("st_cross", w.st_cross);
    fn("head.w", w.head_w);
}

std::vector<double> reduce_dim(const std::vector<double>& raw, const Mat& w, const Mat& b) {
    if (static_cast<int>(raw.size()) != w.rows || b.rows != 1 || b.cols != w.cols)
        throw Error(ErrorCode::ShapeMismatch, "reduce_dim shapes inconsistent");
    Mat r(1, w.rows);
    std::copy(raw.begin(), raw.end(), r.a.begin());
    Mat out = mul(r, w);
    kernels::axpy(out.row(0), 1.0, b.row(0), b.cols);
    return out.a;
}

Mat self_attention_block(const Mat& s, const AttnLayer& layer, int heads, bool causal,
                         bool literal) {
    return attn_forward(s, s, layer, heads, causal && !literal, literal, true, nullptr);
}

Mat long_short_cross(const Mat& s_short, const Mat& s_long, const AttnLayer& layer, int heads,
                     bool literal) {
    return attn_forward(s_short, s_long, layer, heads, false, literal, false, nullptr);
}

std::vector<double> spatiotemporal_cross(const std::vector<double>& s_t, const Mat& s_ls,
                                         const AttnLayer& layer, int heads, bool literal) {
    Mat q(1, static_cast<int>(s_t.size()));
    std::copy(s_t.begin(), s_t.end(), q.a.begin());
    return attn_forward(q, s_ls, layer, heads, false, literal, false, nullptr).a;
}

PhaseProbabilities predict(StreamState& state, const LsSatWeights& w,
                           const std::vector<double>& raw) {
    const LsSatConfig& cfg = w.cfg;
    validate_config(cfg);
    const int d = cfg.d_sf();
    if (state.frames_seen == 0) {
        state.long_k.assign(cfg.n_self, Mat(0, d));
        state.long_v.assign(cfg.n_self, Mat(0, d));
        state.ls_k.assign(cfg.n_cross, Mat(0, d));
        state.ls_v.assign(cfg.n_cross, Mat(0, d));
        state.window = Mat(0, d);
    }
    const std::vector<double> s = reduce_dim(raw, w.reduce_w, w.reduce_b);

    // Long branch, one causal row: project, append to the cache, attend over
    // everything cached so far (which is exactly rows 1..t).
    std::vector<double> scratch;
    Mat x(1, d);
    std::copy(s.begin(), s.end(), x.a.begin());
    for (int i = 0; i < cfg.n_self; ++i) {
        LnCache ln;
        ln_rows(x, ln);
        const Mat q = mul(ln.y, w.long_self[i].wq);
        const Mat k = mul(ln.y, w.long_self[i].wk);
        const Mat v = mul(ln.y, w.long_self[i].wv);
        append_row(state.long_k[i], k.row(0), d);
        append_row(state.long_v[i], v.row(0), d);
        Mat concat(1, d);
        attend_cached(q.row(0), state.long_k[i], state.long_v[i], cfg.heads, concat.row(0),
                      scratch);
        add_inplace(x, mul(concat, w.long_self[i].wo));
    }
    LnCache lnl;
    ln_rows(x, lnl);
    for (int j = 0; j < cfg.n_cross; ++j) {
        const Mat k = mul(lnl.y, w.ls_cross[j].wk);
        const Mat v = mul(lnl.y, w.ls_cross[j].wv);
        append_row(state.ls_k[j], k.row(0), d);
        append_row(state.ls_v[j], v.row(0), d);
    }

    if (state.window.rows == cfg.tau) drop_first_row(state.window);
    append_row(state.window, s.data(), d);

    Mat X = state.window;
    for (int i = 0; i < cfg.n_self; ++i)
        X = attn_forward(X, X, w.short_self[i], cfg.heads, true, false, true, nullptr);
    for (int j = 0; j < cfg.n_cross; ++j) {
        LnCache xn;
        ln_rows(X, xn);
        const Mat q = mul(xn.y, w.ls_cross[j].wq);
        Mat concat(X.rows, d);
        for (int r = 0; r < X.rows; ++r)
            attend_cached(q.row(r), state.ls_k[j], state.ls_v[j], cfg.heads, concat.row(r),
                          scratch);
        add_inplace(X, mul(concat, w.ls_cross[j].wo));
    }
    Mat q(1, d);
    std::copy(s.begin(), s.end(), q.a.begin());
    for (int j = 0; j < cfg.n_cross; ++j)
        q = attn_forward(q, X, w.st_cross[j], cfg.heads, false, false, false, nullptr);

    ++state.frames_seen;
    PhaseProbabilities out;
    out.probs = softmax_vec(mul(q, w.head_w));
    return out;
}

std::vector<PhaseProbabilities> predict_sequence(const LsSatWeights& w, const Mat& raw_frames) {
    std::vector<PhaseProbabilities> out;
    forward_sequence(w, raw_frames, nullptr, &out);
    return out;
}

// ----------------------------------------------------------------- losses

double phase_ce_loss(const PhaseProbabilities& pred, int gt_phase) {
    const int k = static_cast<int>(pred.probs.size());
    if (gt_phase < 0 || gt_phase >= k)
        throw Error(ErrorCode::InvalidConfig, "ground-truth phase out of range");
    return -std::log(std::max(pred.probs[gt_phase], kLogFloor)) / k;
}

double weighted_ce_loss(const PhaseProbabilities& pred, int gt_phase,
                        const std::vector<double>& class_weights) {
    if (class_weights.size() != pred.probs.size())
        throw Error(ErrorCode::ShapeMismatch, "class weight count != phase count");
    return class_weights[gt_phase] * phase_ce_loss(pred, gt_phase);
}

std::vector<double> inverse_freq_weights(const std::vector<long>& counts) {
    if (counts.empty()) throw Error(ErrorCode::EmptyClass, "no phase counts");
    double total = 0;
    for (long c : counts) {
        if (c <= 0) throw Error(ErrorCode::EmptyClass, "phase with zero training samples");
        total += static_cast<double>(c);
    }
    std::vector<double> w(counts.size());
    double mean = 0;
    for (size_t i = 0; i < counts.size(); ++i) {
        w[i] = total / static_cast<double>(counts[i]);
        mean += w[i];
    }
    mean /= static_cast<double>(w.size());
    for (double& v : w) v /= mean;
    return w;
}

double seg_hybrid_loss(const std::vector<double>& pred_prob, const std::vector<std::uint8_t>& gt,
                       double alpha, bool literal_direction) {
    if (pred_prob.size() != gt.size())
        throw Error(ErrorCode::ShapeMismatch, "mask sizes differ");
    if (pred_prob.empty()) throw Error(ErrorCode::ShapeMismatch, "empty masks");
    double ce = 0, inter = 0, psum = 0, gsum = 0;
    for (size_t i = 0; i < pred_prob.size(); ++i) {
        const double p = pred_prob[i];
        const double g = gt[i] ? 1.0 : 0.0;
        if (literal_direction) {
            // The equation as printed: prediction weights, truth inside log.
            ce -= p * std::log(std::max(g, kLogFloor)) +
                  (1.0 - p) * std::log(std::max(1.0 - g, kLogFloor));
        } else {
            ce -= g * std::log(std::max(p, kLogFloor)) +
                  (1.0 - g) * std::log(std::max(1.0 - p, kLogFloor));
        }
        inter += p * g;
        psum += p;
        gsum += g;
    }
    ce /= static_cast<double>(pred_prob.size());
    const double dice = (2.0 * inter + 1e-6) / (psum + gsum + 1e-6);
    return ce + alpha * (1.0 - dice);
}

double combined_loss(double phase_loss, double seg_loss, double beta) {
    return phase_loss + beta * seg_loss;
}

// --------------------------------------------------------------- training

double detail::sequence_loss_grad(const LsSatWeights& w, const Mat& raw_frames,
                                  const std::vector<int>& labels,
                                  const std::vector<double>& class_weights, LsSatWeights* grad) {
    const LsSatConfig& cfg = w.cfg;
    if (static_cast<int>(labels.size()) != raw_frames.rows)
        throw Error(ErrorCode::LengthMismatch, "label count != frame count");
    if (static_cast<int>(class_weights.size()) != cfg.k_s)
        throw Error(ErrorCode::ShapeMismatch, "class weight count != phase count");
    const int T = raw_frames.rows, d = cfg.d_sf(), k = cfg.k_s;

    SeqTape tape;
    forward_sequence(w, raw_frames, &tape, nullptr);

    double loss = 0;
    for (int t = 0; t < T; ++t) {
        const int glabel = labels[t];
        if (glabel < 0 || glabel >= k)
            throw Error(ErrorCode::InvalidConfig, "label out of phase range");
        loss -= class_weights[glabel] *
                std::log(std::max(tape.frames[t].probs[glabel], kLogFloor)) / k;
    }
    loss /= T;
    if (!grad) return loss;

    LsSatWeights& g = *grad;
    Mat dS(T, d);
    std::vector<Mat> dlsK(cfg.n_cross, Mat(T, d)), dlsV(cfg.n_cross, Mat(T, d));

    for (int t = 0; t < T; ++t) {
        FrameTape& f = tape.frames[t];
        const int wlen = t - f.t0 + 1;
        const int gt = labels[t];
        const double scale = class_weights[gt] / (static_cast<double>(k) * T);

        Mat dlogits(1, k);
        for (int s = 0; s < k; ++s)
            dlogits.at(0, s) = scale * (f.probs[s] - (s == gt ? 1.0 : 0.0));
        add_mul_tn(g.head_w, f.q_final, dlogits);
        Mat dq = mul_nt(dlogits, w.head_w);

        Mat dXfinal(wlen, d);
        for (int j = cfg.n_cross - 1; j >= 0; --j) {
            Mat dq_prev(1, d);
            attn_backward(f.st_tapes[j], w.st_cross[j], cfg.heads, false, dq, dq_prev, &dXfinal,
                          g.st_cross[j]);
            dq = std::move(dq_prev);
        }
        kernels::axpy(dS.row(t), 1.0, dq.row(0), d); // st query source

        Mat dX = std::move(dXfinal);
        for (int j = cfg.n_cross - 1; j >= 0; --j) {
            Mat dX_prev(wlen, d);
            ls_cross_backward(f.ls_tapes[j], tape.ls_k[j], tape.ls_v[j], t + 1, w.ls_cross[j],
                              cfg.heads, dX, dX_prev, dlsK[j], dlsV[j], g.ls_cross[j]);
            dX = std::move(dX_prev);
        }
        for (int i = cfg.n_self - 1; i >= 0; --i) {
            Mat dprev(wlen, d);
            attn_backward(f.short_tapes[i], w.short_self[i], cfg.heads, true, dX, dprev, nullptr,
                          g.short_self[i]);
            dX = std::move(dprev);
        }
        for (int r = 0; r < wlen; ++r) kernels::axpy(dS.row(f.t0 + r), 1.0, dX.row(r), d);
    }

    // Long-branch context: gather all per-frame K/V gradients, then run the
    // self-attention stack backward once.
    Mat dLNL(T, d);
    for (int j = 0; j < cfg.n_cross; ++j) {
        add_inplace(dLNL, mul_nt(dlsK[j], w.ls_cross[j].wk));
        add_inplace(dLNL, mul_nt(dlsV[j], w.ls_cross[j].wv));
        add_mul_tn(g.ls_cross[j].wk, tape.lnl.y, dlsK[j]);
        add_mul_tn(g.ls_cross[j].wv, tape.lnl.y, dlsV[j]);
    }
    Mat dLong = ln_backward(tape.lnl, dLNL);
    for (int i = cfg.n_self - 1; i >= 0; --i) {
        Mat dprev(T, d);
        attn_backward(tape.long_tapes[i], w.long_self[i], cfg.heads, true, dLong, dprev, nullptr,
                      g.long_self[i]);
        dLong = std::move(dprev);
    }
    add_inplace(dS, dLong);

    add_mul_tn(g.reduce_w, raw_frames, dS);
    for (int t = 0; t < T; ++t) kernels::axpy(g.reduce_b.row(0), 1.0, dS.row(t), d);
    return loss;
}

TrainResult train_toy(const std::vector<Mat>& sequences,
                      const std::vector<std::vector<int>>& labels, const LsSatConfig& cfg,
                      const TrainConfig& train) {
    if (sequences.empty() || sequences.size() != labels.size())
        throw Error(ErrorCode::InvalidConfig, "dataset empty or misaligned");
    std::vector<long> counts(cfg.k_s, 0);
    for (const auto& seq : labels)
        for (int l : seq) {
            if (l < 0 || l >= cfg.k_s)
                throw Error(ErrorCode::InvalidConfig, "label out of phase range");
            ++counts[l];
        }
    const std::vector<double> class_weights = inverse_freq_weights(counts);

    TrainResult out;
    out.weights = init_weights(cfg, train.seed);
    LsSatWeights grad = zeros_like(out.weights);
    LsSatWeights m1 = zeros_like(out.weights);
    LsSatWeights m2 = zeros_like(out.weights);
    std::vector<Mat*> wt, gt, mt, vt;
    for_each_tensor(out.weights, [&](const std::string&, Mat& m) { wt.push_back(&m); });
    for_each_tensor(grad, [&](const std::string&, Mat& m) { gt.push_back(&m); });
    for_each_tensor(m1, [&](const std::string&, Mat& m) { mt.push_back(&m); });
    for_each_tensor(m2, [&](const std::string&, Mat& m) { vt.push_back(&m); });

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    long step = 0;
    for (int epoch = 0; epoch < train.epochs; ++epoch) {
        double epoch_loss = 0;
        for (size_t s = 0; s < sequences.size(); ++s) {
            for (Mat* g : gt) std::fill(g->a.begin(), g->a.end(), 0.0);
            const double loss = detail::sequence_loss_grad(out.weights, sequences[s], labels[s],
                                                           class_weights, &grad);
            if (!std::isfinite(loss))
                throw Error(ErrorCode::DivergenceDetected, "training loss left the reals");
            epoch_loss += loss;
            ++step;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
            for (size_t i = 0; i < wt.size(); ++i) {
                double* wv = wt[i]->a.data();
                double* gv = gt[i]->a.data();
                double* mv = mt[i]->a.data();
                double* vv = vt[i]->a.data();
                const size_t len = wt[i]->a.size();
                for (size_t j = 0; j < len; ++j) {
                    mv[j] = b1 * mv[j] + (1.0 - b1) * gv[j];
                    vv[j] = b2 * vv[j] + (1.0 - b2) * gv[j] * gv[j];
                    wv[j] -= train.lr * (mv[j] / c1) / (std::sqrt(vv[j] / c2) + eps);
                }
            }
        }
        out.loss_curve.push_back(epoch_loss / static_cast<double>(sequences.size()));
    }
    return out;
}

// ------------------------------------------------------------- persistence

namespace {

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::ifstream& f, T& v) {
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<bool>(f);
}

void write_tensor(std::ofstream& f, const std::string& name, const std::vector<std::uint64_t>& dims,
                  const double* data, size_t count) {
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(dims.size()));
    for (std::uint64_t d : dims) write_pod<std::uint64_t>(f, d);
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

struct RawTensor {
    std::vector<std::uint64_t> dims;
    std::vector<double> data;
};

} // namespace

void save_weights(const LsSatWeights& w, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot open for writing: " + path);
    f.write("LSSAT1", 6);
    const double meta[7] = {
        static_cast<double>(w.cfg.d_raw),  static_cast<double>(w.cfg.kappa),
        static_cast<double>(w.cfg.k_s),    static_cast<double>(w.cfg.tau),
        static_cast<double>(w.cfg.n_self), static_cast<double>(w.cfg.n_cross),
        static_cast<double>(w.cfg.heads)};
    write_tensor(f, "meta", {7}, meta, 7);
    for_each_tensor(const_cast<LsSatWeights&>(w), [&](const std::string& name, Mat& m) {
        write_tensor(f, name,
                     {static_cast<std::uint64_t>(m.rows), static_cast<std::uint64_t>(m.cols)},
                     m.a.data(), m.a.size());
    });
    f.flush();
    if (!f) throw Error(ErrorCode::IoFailure, "short write: " + path);
}

LsSatWeights load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot open: " + path);
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, "LSSAT1", 6) != 0)
        throw Error(ErrorCode::InvalidFormat, "not a weights file: " + path);

    std::map<std::string, RawTensor> tensors;
    while (true) {
        std::uint32_t name_len;
        if (!read_pod(f, name_len)) break; // clean EOF
        if (name_len == 0 || name_len > 1024)
            throw Error(ErrorCode::InvalidFormat, "implausible tensor name length");
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        std::uint32_t rank;
        if (!f || !read_pod(f, rank) || rank > 8)
            throw Error(ErrorCode::InvalidFormat, "truncated tensor header");
        RawTensor t;
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint64_t dim;
            if (!read_pod(f, dim) || dim > (1u << 30))
                throw Error(ErrorCode::InvalidFormat, "bad tensor dimension");
            t.dims.push_back(dim);
            count *= dim;
        }
        t.data.resize(count);
        f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(count * 8));
        if (!f) throw Error(ErrorCode::InvalidFormat, "truncated tensor payload");
        tensors.emplace(std::move(name), std::move(t));
    }

    const auto meta_it = tensors.find("meta");
    if (meta_it == tensors.end() || meta_it->second.data.size() != 7)
        throw Error(ErrorCode::InvalidFormat, "missing model metadata");
    const auto& meta = meta_it->second.data;
    LsSatConfig cfg;
    cfg.d_raw = static_cast<int>(meta[0]);
    cfg.kappa = static_cast<int>(meta[1]);
    cfg.k_s = static_cast<int>(meta[2]);
    cfg.tau = static_cast<int>(meta[3]);
    cfg.n_self = static_cast<int>(meta[4]);
    cfg.n_cross = static_cast<int>(meta[5]);
    cfg.heads = static_cast<int>(meta[6]);

    LsSatWeights w = sized_weights(cfg);
    for_each_tensor(w, [&](const std::string& name, Mat& m) {
        const auto it = tensors.find(name);
        if (it == tensors.end())
            throw Error(ErrorCode::InvalidFormat, "missing tensor: " + name);
        const RawTensor& t = it->second;
        if (t.dims.size() != 2 || t.dims[0] != static_cast<std::uint64_t>(m.rows) ||
            t.dims[1] != static_cast<std::uint64_t>(m.cols))
            throw Error(ErrorCode::InvalidFormat, "tensor shape mismatch: " + name);
        m.a = t.data;
    });
    return w;
}

} // namespace phaco
