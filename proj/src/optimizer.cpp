#include "esfo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>

#include <Eigen/Dense>

#include "esfo/errors.hpp"
#include "esfo/geometry.hpp"
#include "esfo/triangulation.hpp"

namespace esfo {

namespace {

constexpr double kRelStep = 1e-6;

double fd_step(double x) { return kRelStep * std::max(1.0, std::abs(x)); }

void tangent_basis(const Eigen::Vector3d& n, Eigen::Vector3d& b1, Eigen::Vector3d& b2) {
  Eigen::Index axis = 0;
  n.cwiseAbs().minCoeff(&axis);
  const Eigen::Vector3d e = Eigen::Vector3d::Unit(axis);
  b1 = (e - e.dot(n) * n).normalized();
  b2 = n.cross(b1);
}

// Poses for every window, empty where the orbit model is degenerate.
std::map<int, std::optional<CameraPose>> window_poses(const OrbitParams& orbit,
                                                      std::span<const Observation> obs,
                                                      double dt) {
  std::map<int, std::optional<CameraPose>> poses;
  for (const auto& o : obs) {
    if (poses.contains(o.window)) continue;
    try {
      poses[o.window] = orbit_pose(o.window * dt, orbit);
    } catch (const DegenerateGeometry&) {
      poses[o.window] = std::nullopt;
    }
  }
  return poses;
}

// Returns false when the point is behind the camera or the pose is missing.
bool project_one(const std::optional<CameraPose>& pose, const Eigen::Vector3d& X,
                 const CameraIntrinsics& K, const Eigen::Vector2d& measured,
                 Eigen::Vector2d& residual) {
  if (!pose) return false;
  const Eigen::Vector3d Xc = pose->apply(X);
  if (!(Xc.z() > kMinDepth)) return false;
  residual = Eigen::Vector2d(K.fx * Xc.x() / Xc.z() + K.cx, K.fy * Xc.y() / Xc.z() + K.cy) -
             measured;
  return residual.allFinite();
}

void check_landmarks(std::span<const Observation> obs, std::size_t count) {
  for (const auto& o : obs) {
    if (o.landmark < 0 || static_cast<std::size_t>(o.landmark) >= count) {
      throw PreconditionError("observation references unknown landmark " +
                              std::to_string(o.landmark));
    }
  }
}

ResidualSet evaluate(const std::map<int, std::optional<CameraPose>>& poses,
                     std::span<const Eigen::Vector3d> landmarks,
                     std::span<const Observation> obs, const CameraIntrinsics& K, double cap) {
  ResidualSet out;
  out.values.resize(obs.size());
  out.behind.assign(obs.size(), false);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto it = poses.find(obs[i].window);
    Eigen::Vector2d e;
    if (it != poses.end() && project_one(it->second, landmarks[obs[i].landmark], K, obs[i].px, e)) {
      out.values[i] = e;
    } else {
      out.values[i] = Eigen::Vector2d(cap, 0.0);
      out.behind[i] = true;
    }
  }
  return out;
}

double robust_cost(const ResidualSet& res, double delta) {
  double c = 0.0;
  for (const auto& e : res.values) c += huber(e.norm(), delta);
  return c;
}

double irls_weight(double s, double delta) { return s <= delta ? 1.0 : delta / s; }

// Linearised system in Schur form.
struct Linearization {
  Eigen::Matrix<double, kOrbitDofs, kOrbitDofs> A;
  Eigen::Matrix<double, kOrbitDofs, 1> ga;
  std::vector<Eigen::Matrix<double, kOrbitDofs, 3>> B;
  std::vector<Eigen::Matrix3d> C;
  std::vector<Eigen::Vector3d> gp;
  std::vector<bool> active;  // landmark has at least one usable observation

  Eigen::VectorXd gradient() const {
    Eigen::VectorXd g(kOrbitDofs + 3 * gp.size());
    g.head<kOrbitDofs>() = ga;
    for (std::size_t p = 0; p < gp.size(); ++p) g.segment<3>(kOrbitDofs + 3 * p) = gp[p];
    return g;
  }
};

Linearization linearize(const SolverState& state, std::span<const Observation> obs,
                        const CameraIntrinsics& K, double dt, const OptimizerOptions& opts) {
  const std::size_t np = state.landmarks.size();
  const std::size_t m = obs.size();
  const auto poses = window_poses(state.orbit, obs, dt);
  const ResidualSet base = evaluate(poses, state.landmarks, obs, K, opts.residual_cap);

  // Orbit columns: central differences over the whole observation set.
  std::vector<Eigen::Matrix<double, 2, kOrbitDofs>> Jg(m);
  std::vector<bool> usable(m);
  for (std::size_t i = 0; i < m; ++i) usable[i] = !base.behind[i];
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(kOrbitDofs + 3 * np);
  const double scale[kOrbitDofs] = {state.orbit.f, 0, 0, 0, 0, 0, 0,
                                    state.orbit.c.x(), state.orbit.c.y(), state.orbit.c.z()};
  for (int j = 0; j < kOrbitDofs; ++j) {
    const double h = fd_step(scale[j]);
    Eigen::VectorXd d = zero;
    d(j) = h;
    const SolverState plus = retract(state, d);
    d(j) = -h;
    const SolverState minus = retract(state, d);
    const ResidualSet rp =
        evaluate(window_poses(plus.orbit, obs, dt), state.landmarks, obs, K, opts.residual_cap);
    const ResidualSet rm =
        evaluate(window_poses(minus.orbit, obs, dt), state.landmarks, obs, K, opts.residual_cap);
    for (std::size_t i = 0; i < m; ++i) {
      if (rp.behind[i] || rm.behind[i]) usable[i] = false;
      Jg[i].col(j) = (rp.values[i] - rm.values[i]) / (2.0 * h);
    }
  }

  Linearization lin;
  lin.A.setZero();
  lin.ga.setZero();
  lin.B.assign(np, Eigen::Matrix<double, kOrbitDofs, 3>::Zero());
  lin.C.assign(np, Eigen::Matrix3d::Zero());
  lin.gp.assign(np, Eigen::Vector3d::Zero());
  lin.active.assign(np, false);

  for (std::size_t i = 0; i < m; ++i) {
    if (!usable[i]) continue;
    const auto& pose = poses.at(obs[i].window);
    const int p = obs[i].landmark;
    const Eigen::Vector3d& X = state.landmarks[p];
    Eigen::Matrix<double, 2, 3> Jl;
    bool ok = true;
    for (int a = 0; a < 3 && ok; ++a) {
      const double h = fd_step(X(a));
      Eigen::Vector3d Xp = X, Xm = X;
      Xp(a) += h;
      Xm(a) -= h;
      Eigen::Vector2d ep, em;
      ok = project_one(pose, Xp, K, obs[i].px, ep) && project_one(pose, Xm, K, obs[i].px, em);
      if (ok) Jl.col(a) = (ep - em) / (2.0 * h);
    }
    if (!ok) continue;
    const Eigen::Vector2d& e = base.values[i];
    const double w = 2.0 * irls_weight(e.norm(), opts.huber_delta);
    lin.A.noalias() += w * Jg[i].transpose() * Jg[i];
    lin.ga.noalias() += w * Jg[i].transpose() * e;
    lin.B[p].noalias() += w * Jg[i].transpose() * Jl;
    lin.C[p].noalias() += w * Jl.transpose() * Jl;
    lin.gp[p].noalias() += w * Jl.transpose() * e;
    lin.active[p] = true;
  }
  return lin;
}

template <typename M>
M damped(const M& H, double lambda) {
  M out = H;
  for (Eigen::Index i = 0; i < H.rows(); ++i) {
    out(i, i) += lambda * std::max(H(i, i), 1e-12);
  }
  return out;
}

std::optional<Eigen::VectorXd> solve_step(const Linearization& lin, double lambda) {
  const std::size_t np = lin.C.size();
  Eigen::Matrix<double, kOrbitDofs, kOrbitDofs> S = damped(lin.A, lambda);
  Eigen::Matrix<double, kOrbitDofs, 1> rhs = -lin.ga;
  std::vector<Eigen::Matrix3d> Cinv(np);
  for (std::size_t p = 0; p < np; ++p) {
    if (!lin.active[p]) continue;
    const Eigen::Matrix3d Cd = damped(lin.C[p], lambda);
    Eigen::FullPivLU<Eigen::Matrix3d> lu(Cd);
    if (!lu.isInvertible()) return std::nullopt;
    Cinv[p] = lu.inverse();
    S.noalias() -= lin.B[p] * Cinv[p] * lin.B[p].transpose();
    rhs.noalias() += lin.B[p] * Cinv[p] * lin.gp[p];
  }
  const Eigen::LDLT<Eigen::Matrix<double, kOrbitDofs, kOrbitDofs>> ldlt(S);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  const Eigen::Matrix<double, kOrbitDofs, 1> dg = ldlt.solve(rhs);
  if (!dg.allFinite()) return std::nullopt;

  Eigen::VectorXd delta = Eigen::VectorXd::Zero(kOrbitDofs + 3 * np);
  delta.head<kOrbitDofs>() = dg;
  for (std::size_t p = 0; p < np; ++p) {
    if (!lin.active[p]) continue;
    delta.segment<3>(kOrbitDofs + 3 * p) = Cinv[p] * (-lin.gp[p] - lin.B[p].transpose() * dg);
  }
  if (!delta.allFinite()) return std::nullopt;
  return delta;
}

struct RunResult {
  SolverState state;
  bool converged = false;
  int iterations = 0;
  std::vector<double> history;
};

RunResult run_lm(const SolverState& init, std::span<const Observation> obs,
                 const CameraIntrinsics& K, double dt, const OptimizerOptions& opts) {
  const CostFunction cf(obs, K, dt, opts);
  RunResult run;
  run.state = init;
  double cost = cf.cost(run.state);
  if (!std::isfinite(cost)) throw InvalidInitialization("initial cost is not finite");
  run.history.push_back(cost);
  double lambda = opts.initial_lambda;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    if (cost == 0.0) {
      run.converged = true;
      break;
    }
    const Linearization lin = linearize(run.state, obs, K, dt, opts);
    if (lin.gradient().lpNorm<Eigen::Infinity>() < opts.gradient_tol) {
      run.converged = true;
      break;
    }
    bool accepted = false;
    while (lambda <= 1e16) {
      const auto delta = solve_step(lin, lambda);
      if (delta) {
        const SolverState trial = retract(run.state, *delta);
        const double trial_cost = cf.cost(trial);
        if (std::isfinite(trial_cost) && trial_cost < cost) {
          const double drop = (cost - trial_cost) / cost;
          run.state = trial;
          cost = trial_cost;
          run.history.push_back(cost);
          lambda = std::max(lambda * 0.5, 1e-12);
          accepted = true;
          ++run.iterations;
          if (drop < opts.rel_cost_tol) run.converged = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    // No descent direction left at working precision.
    if (!accepted) run.converged = true;
    if (run.converged) break;
  }
  return run;
}

// Re-triangulates landmarks entering the active horizon for the first time.
void seed_new_landmarks(SolverState& state, const std::vector<bool>& seen,
                        std::span<const Observation> obs, const CameraIntrinsics& K, double dt) {
  std::vector<std::vector<const Observation*>> by_landmark(state.landmarks.size());
  for (const auto& o : obs) by_landmark[o.landmark].push_back(&o);
  for (std::size_t p = 0; p < by_landmark.size(); ++p) {
    if (seen[p] || by_landmark[p].size() < 2) continue;
    PoseSet poses;
    std::vector<Eigen::Vector2d> pixels;
    try {
      for (const auto* o : by_landmark[p]) {
        poses.push_back(orbit_pose(o->window * dt, state.orbit));
        pixels.push_back(o->px);
      }
      const Eigen::Vector3d X = refine_point(state.landmarks[p], poses, pixels, K);
      if (X.allFinite()) state.landmarks[p] = X;
    } catch (const Error&) {
    }
  }
}

}  // namespace

ResidualSet residuals(const OrbitParams& orbit, std::span<const Eigen::Vector3d> landmarks,
                      std::span<const Observation> observations, const CameraIntrinsics& K,
                      double dt, double residual_cap) {
  check_landmarks(observations, landmarks.size());
  return evaluate(window_poses(orbit, observations, dt), landmarks, observations, K, residual_cap);
}

ResidualSet residuals(const SfmSolution& solution, std::span<const Observation> observations,
                      double residual_cap) {
  check_landmarks(observations, solution.landmarks.size());
  std::map<int, std::optional<CameraPose>> poses;
  for (const auto& o : observations) {
    const auto it = solution.poses.find(o.window);
    poses[o.window] = it == solution.poses.end() ? std::nullopt
                                                 : std::optional<CameraPose>(it->second);
  }
  return evaluate(poses, solution.landmarks, observations, solution.intrinsics, residual_cap);
}

double rms_of(const ResidualSet& res) {
  if (res.values.empty()) return 0.0;
  double sq = 0.0;
  for (const auto& e : res.values) sq += e.squaredNorm();
  return std::sqrt(sq / (2.0 * static_cast<double>(res.values.size())));
}

double rms_reprojection(const Reconstruction& rec, std::span<const Observation> observations) {
  return rms_of(residuals(rec.orbit, rec.landmarks, observations, rec.intrinsics, rec.dt));
}

double rms_reprojection(const SfmSolution& solution, std::span<const Observation> observations) {
  return rms_of(residuals(solution, observations));
}

double huber(double s, double delta) {
  return s <= delta ? s * s : 2.0 * delta * s - delta * delta;
}

void OptimizerOptions::validate() const {
  if (!(huber_delta > 0)) throw ValidationError("huber delta must be positive");
  if (max_iters < 0) throw ValidationError("max_iters must be non-negative");
  if (!(initial_lambda > 0)) throw ValidationError("initial damping must be positive");
  if (!(residual_cap > 0)) throw ValidationError("residual cap must be positive");
  for (double h : horizons) {
    if (!(h > 0 && h <= 1)) throw ValidationError("horizons must lie in (0, 1]");
  }
}

SolverState retract(const SolverState& state, const Eigen::VectorXd& delta) {
  const std::size_t np = state.landmarks.size();
  if (delta.size() != static_cast<Eigen::Index>(kOrbitDofs + 3 * np)) {
    throw PreconditionError("increment size does not match the state");
  }
  SolverState out = state;
  OrbitParams& o = out.orbit;
  o.f += delta(0);
  o.R0 = so3_exp(delta.segment<3>(1)) * state.orbit.R0;
  Eigen::Vector3d b1, b2;
  tangent_basis(state.orbit.n, b1, b2);
  o.n = (state.orbit.n + delta(4) * b1 + delta(5) * b2).normalized();
  const Eigen::Vector3d u_t = (state.orbit.u - state.orbit.u.dot(o.n) * o.n).normalized();
  o.u = axis_rotation(o.n, delta(6)) * u_t;
  o.c += delta.segment<3>(7);
  o.normalize();
  for (std::size_t p = 0; p < np; ++p) out.landmarks[p] += delta.segment<3>(kOrbitDofs + 3 * p);
  return out;
}

CostFunction::CostFunction(std::span<const Observation> observations, const CameraIntrinsics& K,
                           double dt, const OptimizerOptions& opts)
    : observations_(observations.begin(), observations.end()), K_(K), dt_(dt), opts_(opts) {}

double CostFunction::cost(const SolverState& state) const {
  check_landmarks(observations_, state.landmarks.size());
  const auto poses = window_poses(state.orbit, observations_, dt_);
  return robust_cost(evaluate(poses, state.landmarks, observations_, K_, opts_.residual_cap),
                     opts_.huber_delta);
}

Eigen::VectorXd CostFunction::gradient(const SolverState& state) const {
  check_landmarks(observations_, state.landmarks.size());
  return linearize(state, observations_, K_, dt_, opts_).gradient();
}

Reconstruction optimize(const Reconstruction& init, std::span<const Observation> observations,
                        const OptimizerOptions& opts) {
  opts.validate();
  init.intrinsics.validate();
  if (!(init.dt > 0)) throw ValidationError("window duration must be positive");
  check_landmarks(observations, init.landmarks.size());

  const auto finite = [](const auto& m) { return m.allFinite(); };
  const OrbitParams& o = init.orbit;
  if (!std::isfinite(o.r) || !std::isfinite(o.f) || !finite(o.R0) || !finite(o.n) ||
      !finite(o.u) || !finite(o.c) || !std::all_of(init.landmarks.begin(), init.landmarks.end(), finite)) {
    throw InvalidInitialization("initial parameters are not finite");
  }

  SolverState start{init.orbit, init.landmarks};
  start.orbit.normalize();
  const CostFunction full(observations, init.intrinsics, init.dt, opts);
  const double initial_cost = full.cost(start);
  if (!std::isfinite(initial_cost)) throw InvalidInitialization("initial cost is not finite");

  RunResult result;
  if (opts.continuation && !observations.empty()) {
    int kmin = observations[0].window, kmax = kmin;
    for (const auto& o : observations) {
      kmin = std::min(kmin, o.window);
      kmax = std::max(kmax, o.window);
    }
    SolverState state = start;
    std::vector<bool> seen(init.landmarks.size(), false);
    bool first = true;
    for (double h : opts.horizons) {
      const double limit = kmin + h * (kmax - kmin);
      std::vector<Observation> subset;
      for (const auto& o : observations) {
        if (o.window <= limit) subset.push_back(o);
      }
      if (subset.size() < 2) continue;
      if (!first) seed_new_landmarks(state, seen, subset, init.intrinsics, init.dt);
      first = false;
      state = run_lm(state, subset, init.intrinsics, init.dt, opts).state;
      for (const auto& o : subset) seen[o.landmark] = true;
    }
    seed_new_landmarks(state, seen, observations, init.intrinsics, init.dt);
    result = run_lm(state, observations, init.intrinsics, init.dt, opts);
    // Continuation must never end worse than where it started.
    if (!(result.history.back() <= initial_cost)) {
      result = run_lm(start, observations, init.intrinsics, init.dt, opts);
    }
  } else {
    result = run_lm(start, observations, init.intrinsics, init.dt, opts);
  }

  Reconstruction out = init;
  out.orbit = result.state.orbit;
  out.landmarks = result.state.landmarks;
  out.windows = observed_windows({observations.begin(), observations.end()});
  out.converged = result.converged;
  out.iterations = result.iterations;
  out.cost_history = result.history;
  out.initial_rms = rms_of(residuals(init.orbit, init.landmarks, observations, init.intrinsics,
                                     init.dt, opts.residual_cap));
  out.rms_reprojection = rms_of(residuals(out.orbit, out.landmarks, observations, out.intrinsics,
                                          out.dt, opts.residual_cap));
  return out;
}

}  // namespace esfo
