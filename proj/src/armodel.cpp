#include "dpwavelet/armodel.hpp"

#include <cmath>
#include <random>

#include "dpwavelet/rng.hpp"

namespace dpw::armodel {

namespace {

constexpr double kLnEps = 1e-5;

using Eigen::MatrixXd;
using Eigen::VectorXd;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

struct SegmentPlan {
  std::vector<Segment> segments;
  int total = 0;
  void add(const std::string& name, int size) {
    segments.push_back({name, total, size});
    total += size;
  }
};

SegmentPlan plan_segments(const ModelConfig& c) {
  const int d = c.embed_dim, m = c.mlp_width;
  const int va = c.approx_vocab, vd = c.vocab_size - c.approx_vocab;
  SegmentPlan p;
  p.add("embed.cond", c.cond_vocab * d);
  p.add("embed.tok.approx", va * d);
  p.add("embed.tok.detail", vd * d);
  p.add("embed.pos", c.max_seq_len * d);
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    p.add(pre + "ln1.approx", 2 * d);
    p.add(pre + "ln1.detail", 2 * d);
    p.add(pre + "attn.wq", d * d);
    p.add(pre + "attn.wk", d * d);
    p.add(pre + "attn.wv", d * d);
    p.add(pre + "attn.wo", d * d);
    p.add(pre + "ln2.approx", 2 * d);
    p.add(pre + "ln2.detail", 2 * d);
    p.add(pre + "mlp.approx", d * m + m + m * d + d);
    p.add(pre + "mlp.detail", d * m + m + m * d + d);
  }
  p.add("final.ln.approx", 2 * d);
  p.add("final.ln.detail", 2 * d);
  p.add("head.approx", d * va);
  p.add("head.detail", d * vd);
  return p;
}

// Read-only views into the flat vector; offsets come from the segment table.
struct View {
  const ModelParams& p;
  Eigen::Map<const MatrixXd> mat(const std::string& name, int rows,
                                 int cols) const {
    const Segment& s = p.segment(name);
    return Eigen::Map<const MatrixXd>(p.theta.data() + s.offset, rows, cols);
  }
  Eigen::Map<const VectorXd> vec(const std::string& name, int off,
                                 int size) const {
    const Segment& s = p.segment(name);
    return Eigen::Map<const VectorXd>(p.theta.data() + s.offset + off, size);
  }
};

struct GradView {
  const ModelParams& p;
  VectorXd& g;
  Eigen::Map<MatrixXd> mat(const std::string& name, int rows, int cols) {
    const Segment& s = p.segment(name);
    return Eigen::Map<MatrixXd>(g.data() + s.offset, rows, cols);
  }
  Eigen::Map<VectorXd> vec(const std::string& name, int off, int size) {
    const Segment& s = p.segment(name);
    return Eigen::Map<VectorXd>(g.data() + s.offset + off, size);
  }
};

struct LayerCache {
  MatrixXd h_in;
  MatrixXd ln1_xhat;
  VectorXd ln1_inv;
  MatrixXd n1, Q, K, V;
  std::vector<MatrixXd> A;  // per head, T x T
  MatrixXd C, attn_out;
  MatrixXd h_mid;
  MatrixXd ln2_xhat;
  VectorXd ln2_inv;
  MatrixXd n2;
  MatrixXd M1_a, H_a, M1_d, H_d;  // both group branches, all rows
  MatrixXd mlp_out;
};

struct Cache {
  std::vector<int> ids;    // -1 for cond positions; body token id otherwise
  std::vector<int> group;  // 0 approx, 1 detail
  MatrixXd X;
  std::vector<LayerCache> layers;
  MatrixXd hf;
  MatrixXd f_xhat;
  VectorXd f_inv;
  MatrixXd F;
  MatrixXd logits;
};

// Row-wise layer norm; xhat and inv-std are group independent, the affine
// part selects gamma/beta by the row's group.
void layer_norm(const MatrixXd& x, const std::vector<int>& group,
                const View& v, const std::string& base, MatrixXd& xhat,
                VectorXd& inv, MatrixXd& out) {
  const int T = int(x.rows()), d = int(x.cols());
  xhat.resize(T, d);
  inv.resize(T);
  out.resize(T, d);
  const auto ga = v.vec(base + ".approx", 0, d), ba = v.vec(base + ".approx", d, d);
  const auto gd = v.vec(base + ".detail", 0, d), bd = v.vec(base + ".detail", d, d);
  for (int i = 0; i < T; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    inv(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mu) * inv(i);
    if (group[i] == 0)
      out.row(i) = xhat.row(i).cwiseProduct(ga.transpose()) + ba.transpose();
    else
      out.row(i) = xhat.row(i).cwiseProduct(gd.transpose()) + bd.transpose();
  }
}

void layer_norm_backward(const MatrixXd& dy, const MatrixXd& xhat,
                         const VectorXd& inv, const std::vector<int>& group,
                         const View& v, GradView& gv, const std::string& base,
                         MatrixXd& dx) {
  const int T = int(dy.rows()), d = int(dy.cols());
  dx.resize(T, d);
  const auto ga = v.vec(base + ".approx", 0, d);
  const auto gd = v.vec(base + ".detail", 0, d);
  auto dga = gv.vec(base + ".approx", 0, d), dba = gv.vec(base + ".approx", d, d);
  auto dgd = gv.vec(base + ".detail", 0, d), dbd = gv.vec(base + ".detail", d, d);
  for (int i = 0; i < T; ++i) {
    const auto gamma = group[i] == 0 ? ga : gd;
    if (group[i] == 0) {
      dga += dy.row(i).cwiseProduct(xhat.row(i)).transpose();
      dba += dy.row(i).transpose();
    } else {
      dgd += dy.row(i).cwiseProduct(xhat.row(i)).transpose();
      dbd += dy.row(i).transpose();
    }
    const Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(gamma.transpose());
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
    dx.row(i) = inv(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
  }
}

void mlp_branch(const MatrixXd& n2, const View& v, const std::string& name,
                int d, int m, MatrixXd& M1, MatrixXd& H, MatrixXd& out) {
  const Segment& s = v.p.segment(name);
  Eigen::Map<const MatrixXd> W1(v.p.theta.data() + s.offset, d, m);
  Eigen::Map<const VectorXd> b1(v.p.theta.data() + s.offset + d * m, m);
  Eigen::Map<const MatrixXd> W2(v.p.theta.data() + s.offset + d * m + m, m, d);
  Eigen::Map<const VectorXd> b2(v.p.theta.data() + s.offset + d * m + m + m * d, d);
  M1 = (n2 * W1).rowwise() + b1.transpose();
  H = M1.unaryExpr([](double x) { return gelu(x); });
  out = (H * W2).rowwise() + b2.transpose();
}

void mlp_branch_backward(const MatrixXd& dout, const MatrixXd& n2,
                         const MatrixXd& M1, const MatrixXd& H, const View& v,
                         GradView& gv, const std::string& name, int d, int m,
                         MatrixXd& dn2) {
  const Segment& s = v.p.segment(name);
  Eigen::Map<const MatrixXd> W1(v.p.theta.data() + s.offset, d, m);
  Eigen::Map<const MatrixXd> W2(v.p.theta.data() + s.offset + d * m + m, m, d);
  Eigen::Map<MatrixXd> dW1(gv.g.data() + s.offset, d, m);
  Eigen::Map<VectorXd> db1(gv.g.data() + s.offset + d * m, m);
  Eigen::Map<MatrixXd> dW2(gv.g.data() + s.offset + d * m + m, m, d);
  Eigen::Map<VectorXd> db2(gv.g.data() + s.offset + d * m + m + m * d, d);
  const MatrixXd dH = dout * W2.transpose();
  dW2 += H.transpose() * dout;
  db2 += dout.colwise().sum().transpose();
  const MatrixXd dM1 =
      dH.cwiseProduct(M1.unaryExpr([](double x) { return gelu_grad(x); }));
  dW1 += n2.transpose() * dM1;
  db1 += dM1.colwise().sum().transpose();
  dn2 = dM1 * W1.transpose();
}

void check_example(const ModelConfig& c, const TrainExample& ex) {
  const int T = int(ex.cond.size() + ex.body.size());
  if (T > c.max_seq_len)
    throw LengthError("forward_loss: sequence length " + std::to_string(T) +
                      " exceeds max " + std::to_string(c.max_seq_len));
  if (ex.loss_mask.size() != ex.body.size())
    throw LengthError("forward_loss: loss mask length mismatch");
  for (int id : ex.cond)
    if (id < 0 || id >= c.cond_vocab)
      throw ArgumentError("forward_loss: condition id out of range");
  for (int id : ex.body)
    if (id < 0 || id >= c.vocab_size)
      throw ArgumentError("forward_loss: body token id out of range");
}

Cache run_forward(const ModelParams& p, const TrainExample& ex) {
  const ModelConfig& c = p.cfg;
  check_example(c, ex);
  const int nc = int(ex.cond.size());
  const int T = nc + int(ex.body.size());
  const int d = c.embed_dim, nh = c.n_heads, dh = d / nh, m = c.mlp_width;
  const int va = c.approx_vocab, vd = c.vocab_size - va;
  const View v{p};

  Cache cache;
  cache.ids.resize(T);
  cache.group.resize(T);
  cache.X.resize(T, d);
  const auto Ec = v.mat("embed.cond", c.cond_vocab, d);
  const auto Ea = v.mat("embed.tok.approx", va, d);
  const auto Ed = v.mat("embed.tok.detail", vd, d);
  const auto Ep = v.mat("embed.pos", c.max_seq_len, d);
  for (int i = 0; i < T; ++i) {
    cache.group[i] = i < nc + c.coarse_prefix_len ? 0 : 1;
    if (i < nc) {
      cache.ids[i] = -1;
      cache.X.row(i) = Ec.row(ex.cond[i]) + Ep.row(i);
    } else {
      const int id = ex.body[i - nc];
      cache.ids[i] = id;
      cache.X.row(i) =
          (id < va ? Ea.row(id) : Ed.row(id - va)) + Ep.row(i);
    }
  }

  MatrixXd h = cache.X;
  cache.layers.resize(c.n_layers);
  const double scale = 1.0 / std::sqrt(double(dh));
  for (int l = 0; l < c.n_layers; ++l) {
    LayerCache& lc = cache.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    lc.h_in = h;
    layer_norm(h, cache.group, v, pre + "ln1", lc.ln1_xhat, lc.ln1_inv, lc.n1);

    const auto Wq = v.mat(pre + "attn.wq", d, d), Wk = v.mat(pre + "attn.wk", d, d);
    const auto Wv = v.mat(pre + "attn.wv", d, d), Wo = v.mat(pre + "attn.wo", d, d);
    lc.Q = lc.n1 * Wq;
    lc.K = lc.n1 * Wk;
    lc.V = lc.n1 * Wv;
    lc.A.assign(nh, MatrixXd::Zero(T, T));
    lc.C.resize(T, d);
    for (int hd = 0; hd < nh; ++hd) {
      const auto Qh = lc.Q.middleCols(hd * dh, dh);
      const auto Kh = lc.K.middleCols(hd * dh, dh);
      const auto Vh = lc.V.middleCols(hd * dh, dh);
      MatrixXd& A = lc.A[hd];
      for (int i = 0; i < T; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j <= i; ++j) {
          A(i, j) = Qh.row(i).dot(Kh.row(j)) * scale;
          mx = std::max(mx, A(i, j));
        }
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
          A(i, j) = std::exp(A(i, j) - mx);
          z += A(i, j);
        }
        for (int j = 0; j <= i; ++j) A(i, j) /= z;
      }
      lc.C.middleCols(hd * dh, dh) = A * Vh;
    }
    lc.attn_out = lc.C * Wo;
    lc.h_mid = h + lc.attn_out;

    layer_norm(lc.h_mid, cache.group, v, pre + "ln2", lc.ln2_xhat, lc.ln2_inv,
               lc.n2);
    MatrixXd out_a, out_d;
    mlp_branch(lc.n2, v, pre + "mlp.approx", d, m, lc.M1_a, lc.H_a, out_a);
    mlp_branch(lc.n2, v, pre + "mlp.detail", d, m, lc.M1_d, lc.H_d, out_d);
    lc.mlp_out.resize(T, d);
    for (int i = 0; i < T; ++i)
      lc.mlp_out.row(i) = cache.group[i] == 0 ? out_a.row(i) : out_d.row(i);
    h = lc.h_mid + lc.mlp_out;
  }

  cache.hf = h;
  layer_norm(h, cache.group, v, "final.ln", cache.f_xhat, cache.f_inv, cache.F);
  const auto Ha = v.mat("head.approx", d, va);
  const auto Hd = v.mat("head.detail", d, vd);
  cache.logits.resize(T, c.vocab_size);
  cache.logits.leftCols(va) = cache.F * Ha;
  cache.logits.rightCols(vd) = cache.F * Hd;
  return cache;
}

// Predicting rows and targets: the token at body position t is predicted by
// logits at absolute position cond+t-1.
struct LossTerms {
  std::vector<int> rows;
  std::vector<int> targets;
};

LossTerms loss_terms(const TrainExample& ex) {
  LossTerms lt;
  const int nc = int(ex.cond.size());
  for (size_t t = 0; t < ex.body.size(); ++t) {
    if (!ex.loss_mask[t]) continue;
    const int q = nc + int(t);
    if (q == 0) continue;  // nothing precedes the first position
    lt.rows.push_back(q - 1);
    lt.targets.push_back(ex.body[t]);
  }
  return lt;
}

double loss_from_logits(const MatrixXd& logits, const LossTerms& lt,
                        MatrixXd* dlogits) {
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  if (lt.rows.empty()) return 0.0;
  const double invm = 1.0 / double(lt.rows.size());
  double loss = 0.0;
  for (size_t i = 0; i < lt.rows.size(); ++i) {
    const auto row = logits.row(lt.rows[i]);
    const double mx = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - mx).exp();
    const double z = e.sum();
    loss += std::log(z) + mx - row(lt.targets[i]);
    if (dlogits) {
      dlogits->row(lt.rows[i]) += e * (invm / z);
      (*dlogits)(lt.rows[i], lt.targets[i]) -= invm;
    }
  }
  return loss * invm;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= 0 || approx_vocab <= 0 || approx_vocab > vocab_size ||
      cond_vocab <= 0 || max_seq_len <= 0 || embed_dim <= 0 || n_layers <= 0 ||
      n_heads <= 0 || mlp_width <= 0 || coarse_prefix_len < 0)
    throw ConfigError("model config: all sizes must be positive");
  if (embed_dim % n_heads != 0)
    throw ConfigError("model config: embed_dim not divisible by n_heads");
}

int ModelParams::segment_index(const std::string& name) const {
  for (size_t i = 0; i < segments.size(); ++i)
    if (segments[i].name == name) return int(i);
  throw ConfigError("unknown parameter segment: " + name);
}

const Segment& ModelParams::segment(const std::string& name) const {
  return segments[segment_index(name)];
}

Eigen::VectorXd ModelParams::coordinate_mask() const {
  VectorXd mask = VectorXd::Zero(theta.size());
  for (size_t i = 0; i < segments.size(); ++i)
    if (trainable[i])
      mask.segment(segments[i].offset, segments[i].size).setOnes();
  return mask;
}

void set_stage_mask(ModelParams& params, Stage stage) {
  params.trainable.assign(params.segments.size(), 1);
  if (stage == Stage::Pretrain) return;
  for (size_t i = 0; i < params.segments.size(); ++i) {
    const std::string& n = params.segments[i].name;
    const bool frozen = n == "embed.tok.detail" || n == "head.detail" ||
                        n == "embed.pos" ||
                        n.find(".detail") != std::string::npos;
    params.trainable[i] = frozen ? 0 : 1;
  }
}

ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  const SegmentPlan plan = plan_segments(cfg);
  p.segments = plan.segments;
  p.theta.resize(plan.total);
  p.trainable.assign(p.segments.size(), 1);

  GaussianStream gs(cfg.seed);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i)
    p.theta(i) = 0.02 * gs.next();
  for (const Segment& s : p.segments) {
    if (s.name.find(".ln") != std::string::npos ||
        s.name.rfind("final.ln", 0) == 0) {
      const int d = s.size / 2;
      p.theta.segment(s.offset, d).setOnes();       // gamma
      p.theta.segment(s.offset + d, d).setZero();   // beta
    }
    if (s.name.rfind("head.", 0) == 0)
      p.theta.segment(s.offset, s.size).setZero();
  }
  return p;
}

double forward_loss(const ModelParams& params, const TrainExample& example,
                    MatrixXd* logits) {
  const Cache cache = run_forward(params, example);
  if (logits) *logits = cache.logits;
  return loss_from_logits(cache.logits, loss_terms(example), nullptr);
}

Eigen::VectorXd per_example_grad(const ModelParams& params,
                                 const TrainExample& example,
                                 double* loss_out) {
  const ModelConfig& c = params.cfg;
  const Cache cache = run_forward(params, example);
  const LossTerms lt = loss_terms(example);
  MatrixXd dlogits;
  const double loss = loss_from_logits(cache.logits, lt, &dlogits);
  if (loss_out) *loss_out = loss;

  VectorXd grad = VectorXd::Zero(params.theta.size());
  if (lt.rows.empty()) return grad;

  const int nc = int(example.cond.size());
  const int T = int(cache.ids.size());
  const int d = c.embed_dim, nh = c.n_heads, dh = d / nh, m = c.mlp_width;
  const int va = c.approx_vocab, vd = c.vocab_size - va;
  const View v{params};
  GradView gv{params, grad};

  // head + final LN
  const auto Ha = v.mat("head.approx", d, va);
  const auto Hd = v.mat("head.detail", d, vd);
  gv.mat("head.approx", d, va) += cache.F.transpose() * dlogits.leftCols(va);
  gv.mat("head.detail", d, vd) += cache.F.transpose() * dlogits.rightCols(vd);
  MatrixXd dF = dlogits.leftCols(va) * Ha.transpose() +
                dlogits.rightCols(vd) * Hd.transpose();
  MatrixXd dh_top;
  layer_norm_backward(dF, cache.f_xhat, cache.f_inv, cache.group, v, gv,
                      "final.ln", dh_top);

  const double scale = 1.0 / std::sqrt(double(dh));
  for (int l = c.n_layers - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";

    // MLP with residual: dh_top flows to both h_mid and the mlp branch
    MatrixXd dout_a = dh_top, dout_d = dh_top;
    for (int i = 0; i < T; ++i) {
      if (cache.group[i] == 0)
        dout_d.row(i).setZero();
      else
        dout_a.row(i).setZero();
    }
    MatrixXd dn2_a, dn2_d;
    mlp_branch_backward(dout_a, lc.n2, lc.M1_a, lc.H_a, v, gv,
                        pre + "mlp.approx", d, m, dn2_a);
    mlp_branch_backward(dout_d, lc.n2, lc.M1_d, lc.H_d, v, gv,
                        pre + "mlp.detail", d, m, dn2_d);
    MatrixXd dh_mid;
    layer_norm_backward(dn2_a + dn2_d, lc.ln2_xhat, lc.ln2_inv, cache.group, v,
                        gv, pre + "ln2", dh_mid);
    dh_mid += dh_top;

    // attention with residual
    const auto Wq = v.mat(pre + "attn.wq", d, d), Wk = v.mat(pre + "attn.wk", d, d);
    const auto Wv = v.mat(pre + "attn.wv", d, d), Wo = v.mat(pre + "attn.wo", d, d);
    const MatrixXd& dattn = dh_mid;  // residual: same upstream for branch
    gv.mat(pre + "attn.wo", d, d) += lc.C.transpose() * dattn;
    const MatrixXd dC = dattn * Wo.transpose();
    MatrixXd dQ = MatrixXd::Zero(T, d), dK = MatrixXd::Zero(T, d),
             dV = MatrixXd::Zero(T, d);
    for (int hd_i = 0; hd_i < nh; ++hd_i) {
      const auto Qh = lc.Q.middleCols(hd_i * dh, dh);
      const auto Kh = lc.K.middleCols(hd_i * dh, dh);
      const auto Vh = lc.V.middleCols(hd_i * dh, dh);
      const auto dCh = dC.middleCols(hd_i * dh, dh);
      const MatrixXd& A = lc.A[hd_i];
      const MatrixXd dA = dCh * Vh.transpose();
      dV.middleCols(hd_i * dh, dh) += A.transpose() * dCh;
      MatrixXd dS(T, T);
      for (int i = 0; i < T; ++i) {
        const double dot = dA.row(i).head(i + 1).dot(A.row(i).head(i + 1));
        dS.row(i).setZero();
        for (int j = 0; j <= i; ++j)
          dS(i, j) = A(i, j) * (dA(i, j) - dot);
      }
      dQ.middleCols(hd_i * dh, dh) += dS * Kh * scale;
      dK.middleCols(hd_i * dh, dh) += dS.transpose() * Qh * scale;
    }
    gv.mat(pre + "attn.wq", d, d) += lc.n1.transpose() * dQ;
    gv.mat(pre + "attn.wk", d, d) += lc.n1.transpose() * dK;
    gv.mat(pre + "attn.wv", d, d) += lc.n1.transpose() * dV;
    const MatrixXd dn1 =
        dQ * Wq.transpose() + dK * Wk.transpose() + dV * Wv.transpose();
    MatrixXd dh_in;
    layer_norm_backward(dn1, lc.ln1_xhat, lc.ln1_inv, cache.group, v, gv,
                        pre + "ln1", dh_in);
    dh_top = dh_in + dh_mid;
  }

  // embeddings
  auto dEc = gv.mat("embed.cond", c.cond_vocab, d);
  auto dEa = gv.mat("embed.tok.approx", va, d);
  auto dEd = gv.mat("embed.tok.detail", vd, d);
  auto dEp = gv.mat("embed.pos", c.max_seq_len, d);
  for (int i = 0; i < T; ++i) {
    dEp.row(i) += dh_top.row(i);
    if (i < nc) {
      dEc.row(example.cond[i]) += dh_top.row(i);
    } else {
      const int id = cache.ids[i];
      if (id < va)
        dEa.row(id) += dh_top.row(i);
      else
        dEd.row(id - va) += dh_top.row(i);
    }
  }

  // restrict to the trainable mask
  for (size_t i = 0; i < params.segments.size(); ++i)
    if (!params.trainable[i])
      grad.segment(params.segments[i].offset, params.segments[i].size)
          .setZero();
  return grad;
}

std::vector<int> sample(const ModelParams& params, const std::vector<int>& cond,
                        const std::vector<int>& prefix,
                        const std::vector<std::pair<int, int>>& slot_ranges,
                        int stop, double temperature, uint64_t seed) {
  const ModelConfig& c = params.cfg;
  if (stop < 0 || stop > int(slot_ranges.size()))
    throw ArgumentError("sample: stop outside body length");
  if (int(prefix.size()) > stop)
    throw CorruptSequenceError("sample: prefix longer than stop");
  for (size_t i = 0; i < prefix.size(); ++i) {
    const auto [off, n] = slot_ranges[i];
    if (prefix[i] < off || prefix[i] >= off + n)
      throw CorruptSequenceError("sample: prefix token " +
                                 std::to_string(prefix[i]) +
                                 " outside slot range at position " +
                                 std::to_string(i));
  }

  if (cond.empty() && stop > 0 && prefix.empty())
    throw ArgumentError("sample: nothing to condition the first token on");

  std::mt19937_64 rng(seed);
  std::vector<int> body = prefix;
  while (int(body.size()) < stop) {
    TrainExample ex;
    ex.cond = cond;
    ex.body = body;
    ex.loss_mask.assign(body.size(), 0);
    MatrixXd logits;
    forward_loss(params, ex, &logits);
    const Eigen::RowVectorXd row = logits.row(logits.rows() - 1);
    const auto [off, n] = slot_ranges[body.size()];

    int picked;
    if (temperature <= 1e-12) {
      picked = 0;
      for (int k = 1; k < n; ++k)
        if (row(off + k) > row(off + picked)) picked = k;
    } else {
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < n; ++k) mx = std::max(mx, row(off + k));
      std::vector<double> p(n);
      double z = 0.0;
      for (int k = 0; k < n; ++k) {
        p[k] = std::exp((row(off + k) - mx) / temperature);
        z += p[k];
      }
      const double u = uniform01(rng) * z;
      double acc = 0.0;
      picked = n - 1;
      for (int k = 0; k < n; ++k) {
        acc += p[k];
        if (acc >= u) {
          picked = k;
          break;
        }
      }
    }
    body.push_back(off + picked);
  }
  return body;
}

}  // namespace dpw::armodel
