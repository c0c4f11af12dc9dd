#include "nlr/objective.hpp"

#include <algorithm>
#include <cmath>

#include "nlr/errors.hpp"
#include "nlr/parallel.hpp"

namespace nlr {
namespace {

constexpr std::size_t kChunk = 256;
constexpr double kProbClamp = 1e-7;
constexpr double kMinGradNorm = 1e-8;

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double bce(double p, double m) {
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -m * std::log(p) - (1.0 - m) * std::log(1.0 - p);
}

template <typename T>
Mat<T> to_mat(std::span<const Vec3> pts) {
  Mat<T> m(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[i].cast<T>();
  return m;
}

// Seeds that make the tangent outputs the spatial gradient.
template <typename T>
JetSeeds<T> spatial_seeds(Mat<T> x) {
  JetSeeds<T> s;
  const auto n = x.cols();
  s.x = std::move(x);
  for (int j = 0; j < 3; ++j) {
    Mat<T> e = Mat<T>::Zero(3, n);
    e.row(j).setOnes();
    s.tangent.push_back(std::move(e));
  }
  return s;
}

JetLayout gradient_layout() {
  JetLayout l;
  l.tangents = 3;
  return l;
}

JetLayout laplacian_layout() {
  JetLayout l;
  l.tangents = 3;
  l.pairs = {{0, 0}, {1, 1}, {2, 2}};
  return l;
}

template <typename T>
JetSeeds<T> radiance_seeds(const FieldModel<T>& model, Mat<T> v, const Mat<T>& dir, bool second_order) {
  JetSeeds<T> s;
  s.x = std::move(v);
  if (!second_order) return s;
  for (int axis = 0; axis < 3; ++axis) {
    Mat<T> first, second;
    model.direction_seeds(dir, axis, first, second);
    s.tangent.push_back(std::move(first));
    s.second.push_back(std::move(second));
  }
  return s;
}

template <typename T>
struct Partial {
  double L_R = 0, L_E = 0, L_M = 0, L_S = 0;
  LayerParams<T> g_sdf, g_rad;
};

template <typename T>
void foreground_chunk(const FieldModel<T>& model, const TracedBatch& b, std::size_t k0, std::size_t k1,
                      const ObjectiveOptions& opts, bool smooth, Partial<T>& out) {
  const auto N = static_cast<Eigen::Index>(k1 - k0);
  const double U = static_cast<double>(b.size());
  const bool want = opts.want_gradient;
  const double w_S = opts.weights.w_S;

  Mat<T> xh(3, N), d(3, N), c(3, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& s = b.samples[b.foreground[k0 + i]];
    xh.col(i) = b.x_hat[k0 + i].cast<T>();
    d.col(i) = s.ray.dir.cast<T>();
    c.col(i) = s.rgb.cast<T>();
  }

  // Last refinement step, x_n = x_hat - f / clamp(grad f . d) * d.
  const auto tape0 = forward_jet(model.sdf, spatial_seeds(Mat<T>(xh)), gradient_layout());
  Mat<T> xn(3, N);
  std::vector<T> delta(N);
  std::vector<char> clamped(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    T dot = 0;
    for (int j = 0; j < 3; ++j) dot += tape0.tangent_output(j)(0, i) * d(j, i);
    const auto dc = static_cast<T>(clamp_denominator(static_cast<double>(dot), opts.denom_clamp));
    clamped[i] = dc != dot;
    delta[i] = dc;
    xn.col(i) = xh.col(i) - (tape0.output()(0, i) / dc) * d.col(i);
  }

  // Normal and feature at x_n.
  const auto tape1 = forward_jet(model.sdf, spatial_seeds(Mat<T>(xn)), gradient_layout());
  Mat<T> g(3, N), n(3, N);
  std::vector<T> gnorm(N);
  for (int j = 0; j < 3; ++j) g.row(j) = tape1.tangent_output(j);
  for (Eigen::Index i = 0; i < N; ++i) {
    gnorm[i] = g.col(i).norm();
    n.col(i) = g.col(i) / std::max(gnorm[i], static_cast<T>(kMinGradNorm));
  }

  const Mat<T> v = model.radiance_input(xn, d, n, tape1.tap());
  const JetLayout rl = smooth ? laplacian_layout() : JetLayout{};
  const auto tape2 = forward_jet(model.radiance, radiance_seeds(model, Mat<T>(v), d, smooth), rl);
  const Mat<T>& B = tape2.output();
  Mat<T> lap;
  if (smooth) lap = tape2.second_output(0) + tape2.second_output(1) + tape2.second_output(2);

  for (Eigen::Index i = 0; i < N; ++i) {
    for (int ch = 0; ch < 3; ++ch) out.L_R += std::abs(static_cast<double>(B(ch, i)) - static_cast<double>(c(ch, i)));
    if (smooth) out.L_S += static_cast<double>(lap.col(i).squaredNorm());
  }
  if (!want) return;

  JetCotangents<T> cot2;
  cot2.output = Mat<T>(3, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (int ch = 0; ch < 3; ++ch) {
      const T r = B(ch, i) - c(ch, i);
      cot2.output(ch, i) = static_cast<T>((r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0)) / U);
    }
  if (smooth && w_S > 0) {
    const Mat<T> qbar = static_cast<T>(2.0 * w_S / U) * lap;
    cot2.second = {qbar, qbar, qbar};
  }
  const Mat<T> vbar = backward_jet(model.radiance, tape2, cot2, out.g_rad, true);

  Mat<T> xbar = vbar.topRows(3);
  const Mat<T> nbar = vbar.middleRows(model.normal_offset(), 3);
  JetCotangents<T> cot1;
  cot1.tap = vbar.middleRows(model.feature_offset(), model.feature_dim());
  // n = g / |g|  =>  gbar = (nbar - n (n . nbar)) / |g|
  Mat<T> gbar = Mat<T>::Zero(3, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    if (gnorm[i] < static_cast<T>(kMinGradNorm)) continue;
    gbar.col(i) = (nbar.col(i) - n.col(i) * n.col(i).dot(nbar.col(i))) / gnorm[i];
  }
  for (int j = 0; j < 3; ++j) cot1.tangent.push_back(gbar.row(j));
  xbar += backward_jet(model.sdf, tape1, cot1, out.g_sdf, true);

  JetCotangents<T> cot0;
  cot0.output = Mat<T>(1, N);
  Mat<T> ghbar = Mat<T>::Zero(3, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const T sbar = -xbar.col(i).dot(d.col(i));
    cot0.output(0, i) = sbar / delta[i];
    if (!clamped[i]) {
      const T dbar = -sbar * tape0.output()(0, i) / (delta[i] * delta[i]);
      ghbar.col(i) = dbar * d.col(i);
    }
  }
  for (int j = 0; j < 3; ++j) cot0.tangent.push_back(ghbar.row(j));
  backward_jet(model.sdf, tape0, cot0, out.g_sdf, false);
}

template <typename T>
void background_chunk(const FieldModel<T>& model, const TracedBatch& b, std::size_t k0, std::size_t k1,
                      const ObjectiveOptions& opts, Partial<T>& out) {
  const auto N = static_cast<Eigen::Index>(k1 - k0);
  const double U = static_cast<double>(b.size());
  const double alpha = opts.weights.alpha;
  JetSeeds<T> seeds;
  seeds.x = to_mat<T>(std::span<const Vec3>(b.x_min).subspan(k0, k1 - k0));
  const auto tape = forward_jet(model.sdf, std::move(seeds), JetLayout{});
  Mat<T> fbar(1, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double f = static_cast<double>(tape.output()(0, i));
    const double m = b.samples[b.background[k0 + i]].mask ? 1.0 : 0.0;
    out.L_M += bce(sigmoid(-alpha * f), m) / (alpha * U);
    fbar(0, i) = static_cast<T>(opts.weights.w_M * loss_mask_derivative(f, m, alpha, b.size()));
  }
  if (!opts.want_gradient) return;
  JetCotangents<T> cot;
  cot.output = std::move(fbar);
  backward_jet(model.sdf, tape, cot, out.g_sdf, false);
}

template <typename T>
void eikonal_chunk(const FieldModel<T>& model, const TracedBatch& b, std::size_t k0, std::size_t k1,
                   const ObjectiveOptions& opts, Partial<T>& out) {
  const auto N = static_cast<Eigen::Index>(k1 - k0);
  const double count = static_cast<double>(b.eikonal_points.size());
  const auto tape = forward_jet(
      model.sdf, spatial_seeds(to_mat<T>(std::span<const Vec3>(b.eikonal_points).subspan(k0, k1 - k0))),
      gradient_layout());
  Mat<T> g(3, N);
  for (int j = 0; j < 3; ++j) g.row(j) = tape.tangent_output(j);
  Mat<T> gbar = Mat<T>::Zero(3, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double gn = static_cast<double>(g.col(i).norm());
    out.L_E += (gn - 1.0) * (gn - 1.0) / count;
    if (gn > 0) gbar.col(i) = static_cast<T>(opts.weights.w_E * 2.0 * (gn - 1.0) / (gn * count)) * g.col(i);
  }
  if (!opts.want_gradient) return;
  JetCotangents<T> cot;
  for (int j = 0; j < 3; ++j) cot.tangent.push_back(gbar.row(j));
  backward_jet(model.sdf, tape, cot, out.g_sdf, false);
}

}  // namespace

void LossWeights::validate() const {
  if (!(w_E >= 0 && w_M >= 0 && w_S >= 0)) throw InvalidArgument("objective: loss weights must be >= 0");
  if (!(alpha > 0)) throw InvalidArgument("objective: mask alpha must be positive");
}

LossTerms combine_losses(double L_R, double L_E, double L_M, double L_S, const LossWeights& w) {
  LossTerms t{L_R, L_E, L_M, L_S, L_R + w.w_E * L_E + w.w_M * L_M + w.w_S * L_S};
  for (double v : {t.L_R, t.L_E, t.L_M, t.L_S, t.total}) {
    if (!std::isfinite(v)) throw NonFinite("objective: non-finite loss term");
  }
  return t;
}

double loss_reconstruction(std::span<const Vec3> pred, std::span<const Vec3> target, std::size_t batch_size) {
  if (pred.size() != target.size()) throw DimensionMismatch("objective: prediction and target counts differ");
  if (batch_size == 0) throw InvalidArgument("objective: empty batch");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]).cwiseAbs().sum();
  return s / static_cast<double>(batch_size);
}

double loss_eikonal(const SignedDistance& f, int sample_count, std::mt19937_64& rng) {
  if (sample_count <= 0) throw InvalidArgument("objective: eikonal sample count must be positive");
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts(static_cast<std::size_t>(sample_count));
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  std::vector<Vec3> g(pts.size());
  f.gradient(pts, g);
  double s = 0;
  for (const auto& v : g) s += (v.norm() - 1.0) * (v.norm() - 1.0);
  return s / sample_count;
}

double loss_mask(std::span<const double> f_min, std::span<const double> m, double alpha, std::size_t batch_size) {
  if (f_min.size() != m.size()) throw DimensionMismatch("objective: f_min and mask counts differ");
  if (batch_size == 0) throw InvalidArgument("objective: empty batch");
  if (!(alpha > 0)) throw InvalidArgument("objective: mask alpha must be positive");
  double s = 0;
  for (std::size_t i = 0; i < f_min.size(); ++i) s += bce(sigmoid(-alpha * f_min[i]), m[i]);
  return s / (alpha * static_cast<double>(batch_size));
}

double loss_mask_derivative(double f_min, double m, double alpha, std::size_t batch_size) {
  const double p = sigmoid(-alpha * f_min);
  if (p <= kProbClamp || p >= 1.0 - kProbClamp) return 0.0;
  return (m - p) / static_cast<double>(batch_size);
}

template <typename T>
double loss_smoothness(const FieldModel<T>& model, std::span<const Vec3> x, std::span<const Vec3> dirs,
                       std::size_t batch_size) {
  if (x.size() != dirs.size()) throw DimensionMismatch("objective: point and direction counts differ");
  if (batch_size == 0) throw InvalidArgument("objective: empty batch");
  if (x.empty()) return 0.0;
  const auto tape = forward_jet(model.sdf, spatial_seeds(to_mat<T>(x)), gradient_layout());
  const auto N = static_cast<Eigen::Index>(x.size());
  Mat<T> n(3, N);
  for (int j = 0; j < 3; ++j) n.row(j) = tape.tangent_output(j);
  for (Eigen::Index i = 0; i < N; ++i) n.col(i) /= std::max(n.col(i).norm(), static_cast<T>(kMinGradNorm));
  const Mat<T> d = to_mat<T>(dirs);
  const Mat<T> v = model.radiance_input(to_mat<T>(x), d, n, tape.tap());
  const auto t2 = forward_jet(model.radiance, radiance_seeds(model, Mat<T>(v), d, true), laplacian_layout());
  const Mat<T> lap = t2.second_output(0) + t2.second_output(1) + t2.second_output(2);
  double s = 0;
  for (Eigen::Index i = 0; i < N; ++i) s += static_cast<double>(lap.col(i).squaredNorm());
  return s / static_cast<double>(batch_size);
}

TracedBatch trace_batch(const SignedDistance& f, std::vector<RaySample> samples, const TraceConfig& cfg,
                        int eikonal_samples, std::mt19937_64& rng) {
  if (samples.empty()) throw InvalidArgument("objective: empty batch");
  if (eikonal_samples <= 0) throw InvalidArgument("objective: eikonal sample count must be positive");
  TracedBatch b;
  b.samples = std::move(samples);
  std::vector<Ray> rays(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) rays[i] = b.samples[i].ray;
  const auto hits = trace_bidirectional(f, rays, cfg, false);

  std::vector<Vec3> cand;
  std::vector<std::size_t> cand_idx;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (hits[i].hit() && b.samples[i].mask) {
      cand.push_back(hits[i].x);
      cand_idx.push_back(i);
    }
  }
  // A vanishing gradient at the hit makes the refinement undefined; such
  // rays fall back to the mask set.
  std::vector<Vec3> grads(cand.size());
  f.gradient(cand, grads);
  std::vector<char> is_fg(b.size(), 0);
  for (std::size_t k = 0; k < cand.size(); ++k) {
    if (grads[k].norm() < kMinGradNorm) continue;
    is_fg[cand_idx[k]] = 1;
    b.foreground.push_back(cand_idx[k]);
    b.x_hat.push_back(cand[k]);
  }

  std::vector<Ray> bg_rays;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (is_fg[i]) continue;
    b.background.push_back(i);
    bg_rays.push_back(rays[i]);
  }
  const auto mins = min_sdf_along_ray(f, bg_rays, cfg);
  for (std::size_t k = 0; k < bg_rays.size(); ++k) {
    const Ray& r = bg_rays[k];
    // Rays missing the domain use their closest approach to the origin.
    const double t = mins[k].valid ? mins[k].t_argmin : std::max(0.0, -r.origin.dot(r.dir));
    b.x_min.push_back(r.at(t));
  }

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  b.eikonal_points.resize(static_cast<std::size_t>(eikonal_samples));
  for (auto& p : b.eikonal_points) p = Vec3(u(rng), u(rng), u(rng));
  return b;
}

template <typename T>
ObjectiveResult<T> loss_total(const FieldModel<T>& model, const TracedBatch& b, const ObjectiveOptions& opts) {
  opts.weights.validate();
  if (b.size() == 0) throw InvalidArgument("objective: empty batch");
  if (b.x_hat.size() != b.foreground.size() || b.x_min.size() != b.background.size()) {
    throw DimensionMismatch("objective: traced batch is inconsistent");
  }
  const bool smooth = opts.weights.w_S > 0 || opts.always_smoothness;
  auto chunks = [](std::size_t n) { return (n + kChunk - 1) / kChunk; };
  const std::size_t nf = chunks(b.foreground.size());
  const std::size_t nb = chunks(b.background.size());
  const std::size_t ne = chunks(b.eikonal_points.size());

  std::vector<Partial<T>> parts(nf + nb + ne);
  parallel_for(parts.size(), [&](std::size_t task) {
    auto& p = parts[task];
    if (opts.want_gradient) {
      p.g_sdf = model.sdf.zeros_like();
      p.g_rad = model.radiance.zeros_like();
    }
    if (task < nf) {
      const std::size_t k0 = task * kChunk;
      foreground_chunk(model, b, k0, std::min(b.foreground.size(), k0 + kChunk), opts, smooth, p);
    } else if (task < nf + nb) {
      const std::size_t k0 = (task - nf) * kChunk;
      background_chunk(model, b, k0, std::min(b.background.size(), k0 + kChunk), opts, p);
    } else {
      const std::size_t k0 = (task - nf - nb) * kChunk;
      eikonal_chunk(model, b, k0, std::min(b.eikonal_points.size(), k0 + kChunk), opts, p);
    }
  });

  double L_R = 0, L_E = 0, L_M = 0, L_S = 0;
  for (const auto& p : parts) {
    L_R += p.L_R;
    L_E += p.L_E;
    L_M += p.L_M;
    L_S += p.L_S;
  }
  const double U = static_cast<double>(b.size());
  ObjectiveResult<T> res;
  res.terms = combine_losses(L_R / U, L_E, L_M, L_S / U, opts.weights);
  if (!opts.want_gradient) return res;

  auto g_sdf = model.sdf.zeros_like();
  auto g_rad = model.radiance.zeros_like();
  for (const auto& p : parts) {
    add_to(g_sdf, p.g_sdf);
    add_to(g_rad, p.g_rad);
  }
  const std::size_t ns = model.sdf.parameter_count();
  res.gradient.resize(model.parameter_count());
  flatten_into(g_sdf, std::span<T>(res.gradient.data(), ns));
  flatten_into(g_rad, std::span<T>(res.gradient.data() + ns, res.gradient.size() - ns));
  for (T v : res.gradient) {
    if (!std::isfinite(static_cast<double>(v))) throw NonFinite("objective: non-finite parameter gradient");
  }
  return res;
}

ShadedPoints shade_surface(const FieldModel<float>& model, std::span<const Vec3> x_hat, std::span<const Vec3> dirs,
                           double denom_clamp) {
  if (x_hat.size() != dirs.size()) throw DimensionMismatch("objective: point and direction counts differ");
  using T = float;
  ShadedPoints out;
  out.x.resize(x_hat.size());
  out.rgb.resize(x_hat.size());
  if (x_hat.empty()) return out;
  const Mat<T> xh = to_mat<T>(x_hat), d = to_mat<T>(dirs);
  const auto N = xh.cols();
  const auto tape0 = forward_jet(model.sdf, spatial_seeds(Mat<T>(xh)), gradient_layout());
  Mat<T> xn(3, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    T dot = 0;
    for (int j = 0; j < 3; ++j) dot += tape0.tangent_output(j)(0, i) * d(j, i);
    const auto dc = static_cast<T>(clamp_denominator(static_cast<double>(dot), denom_clamp));
    xn.col(i) = xh.col(i) - (tape0.output()(0, i) / dc) * d.col(i);
  }
  const auto tape1 = forward_jet(model.sdf, spatial_seeds(Mat<T>(xn)), gradient_layout());
  Mat<T> n(3, N);
  for (int j = 0; j < 3; ++j) n.row(j) = tape1.tangent_output(j);
  for (Eigen::Index i = 0; i < N; ++i) n.col(i) /= std::max(n.col(i).norm(), static_cast<T>(kMinGradNorm));
  const Mat<T> B = evaluate(model.radiance, model.radiance_input(xn, d, n, tape1.tap()));
  for (Eigen::Index i = 0; i < N; ++i) {
    out.x[i] = xn.col(i).cast<double>();
    out.rgb[i] = B.col(i).cast<double>();
  }
  return out;
}

template double loss_smoothness<float>(const FieldModel<float>&, std::span<const Vec3>, std::span<const Vec3>,
                                       std::size_t);
template double loss_smoothness<double>(const FieldModel<double>&, std::span<const Vec3>, std::span<const Vec3>,
                                        std::size_t);
template ObjectiveResult<float> loss_total<float>(const FieldModel<float>&, const TracedBatch&,
                                                  const ObjectiveOptions&);
template ObjectiveResult<double> loss_total<double>(const FieldModel<double>&, const TracedBatch&,
                                                    const ObjectiveOptions&);

}  // namespace nlr
