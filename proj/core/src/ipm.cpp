#include "ropf/ipm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace ropf::ipm {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConeLayout {
    int nonneg = 0;
    std::vector<int> soc_dims;
    std::vector<int> soc_start;
    int total = 0;
    int degree = 0; // nonneg + number of soc cones

    static ConeLayout make(int nonneg, const std::vector<int> &dims) {
        ConeLayout k;
        k.nonneg = nonneg;
        k.soc_dims = dims;
        int at = nonneg;
        for (int d : dims) {
            k.soc_start.push_back(at);
            at += d;
        }
        k.total = at;
        k.degree = nonneg + static_cast<int>(dims.size());
        return k;
    }
};

// Nesterov-Todd scaling state. W is symmetric positive definite with
// W z = W^{-1} s = lambda on the current iterate.
struct Scalings {
    VectorXd w2_nonneg; // s_i / z_i
    struct Soc {
        MatrixXd w;  // eta * H(wbar)
        MatrixXd w2; // eta^2 (2 wbar wbar' - J)
        Eigen::LLT<MatrixXd> w_llt;
    };
    std::vector<Soc> socs;
    VectorXd lambda;
};

bool update_scalings(const VectorXd &s, const VectorXd &z, const ConeLayout &k,
                     Scalings &sc) {
    sc.w2_nonneg.resize(k.nonneg);
    for (int i = 0; i < k.nonneg; ++i) {
        if (s[i] <= 0.0 || z[i] <= 0.0) return false;
        sc.w2_nonneg[i] = s[i] / z[i];
    }
    sc.socs.resize(k.soc_dims.size());
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
        const int d = k.soc_dims[blk];
        const int at = k.soc_start[blk];
        const auto sb = s.segment(at, d);
        const auto zb = z.segment(at, d);
        const double sn1 = sb.tail(d - 1).norm();
        const double zn1 = zb.tail(d - 1).norm();
        const double sres = (sb[0] - sn1) * (sb[0] + sn1);
        const double zres = (zb[0] - zn1) * (zb[0] + zn1);
        if (sres <= 0.0 || zres <= 0.0 || sb[0] <= 0.0 || zb[0] <= 0.0)
            return false;
        const double snorm = std::sqrt(sres);
        const double znorm = std::sqrt(zres);
        VectorXd sbar = sb / snorm, zbar = zb / znorm;
        double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
        VectorXd wbar(d);
        wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
        wbar.tail(d - 1) =
            (sbar.tail(d - 1) - zbar.tail(d - 1)) / (2.0 * gamma);
        const double eta = std::sqrt(snorm / znorm);

        Scalings::Soc &cone = sc.socs[blk];
        cone.w.resize(d, d);
        cone.w(0, 0) = wbar[0];
        cone.w.block(0, 1, 1, d - 1) = wbar.tail(d - 1).transpose();
        cone.w.block(1, 0, d - 1, 1) = wbar.tail(d - 1);
        cone.w.block(1, 1, d - 1, d - 1) =
            MatrixXd::Identity(d - 1, d - 1) +
            wbar.tail(d - 1) * wbar.tail(d - 1).transpose() / (1.0 + wbar[0]);
        cone.w *= eta;

        VectorXd jw = wbar;
        jw.tail(d - 1) *= -1.0;
        cone.w2 = 2.0 * wbar * wbar.transpose();
        cone.w2.diagonal()[0] -= 1.0;
        cone.w2.diagonal().tail(d - 1).array() += 1.0;
        cone.w2 *= eta * eta;

        cone.w_llt.compute(cone.w);
        if (cone.w_llt.info() != Eigen::Success) return false;
    }
    // lambda = W z
    sc.lambda.resize(k.total);
    for (int i = 0; i < k.nonneg; ++i)
        sc.lambda[i] = std::sqrt(sc.w2_nonneg[i]) * z[i];
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
        const int d = k.soc_dims[blk], at = k.soc_start[blk];
        sc.lambda.segment(at, d) = sc.socs[blk].w * z.segment(at, d);
    }
    return true;
}

VectorXd apply_w(const Scalings &sc, const ConeLayout &k, const VectorXd &v) {
    VectorXd out(k.total);
    for (int i = 0; i < k.nonneg; ++i) out[i] = std::sqrt(sc.w2_nonneg[i]) * v[i];
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
        const int d = k.soc_dims[blk], at = k.soc_start[blk];
        out.segment(at, d) = sc.socs[blk].w * v.segment(at, d);
    }
    return out;
}

VectorXd apply_w_inv(const Scalings &sc, const ConeLayout &k, const VectorXd &v) {
    VectorXd out(k.total);
    for (int i = 0; i < k.nonneg; ++i) out[i] = v[i] / std::sqrt(sc.w2_nonneg[i]);
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
        const int d = k.soc_dims[blk], at = k.soc_start[blk];
        out.segment(at, d) = sc.socs[blk].w_llt.solve(v.segment(at, d));
    }
    return out;
}

VectorXd apply_w2(const Scalings &sc, const ConeLayout &k, const VectorXd &v) {
    VectorXd out(k.total);
    for (int i = 0; i < k.nonneg; ++i) out[i] = sc.w2_nonneg[i] * v[i];
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
        const int d = k.soc_dims[blk], at = k.soc_start[blk];
        out.segment(at, d) = sc.socs[blk].w2 * v.segment(at, d);
    }
    return out;
}

// Jordan product u o v per cone.
VectorXd jordan_prod(const ConeLayout &k, const VectorXd &u, const VectorXd &v) {
    VectorXd out(k.total);
    for (int i = 0; i < k.nonneg; ++i) out[i] = u[i] * v[i];
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
        const int d = k.soc_dims[blk], at = k.soc_start[blk];
        const auto ub = u.segment(at, d);
        const auto vb = v.segment(at, d);
        out[at] = ub.dot(vb);
        out.segment(at + 1, d - 1) =
            ub[0] * vb.tail(d - 1) + vb[0] * ub.tail(d - 1);
    }
    return out;
}

// Solve lambda o u = rhs for u.
VectorXd jordan_div(const ConeLayout &k, const VectorXd &lambda,
                    const VectorXd &rhs) {
    VectorXd out(k.total);
    for (int i = 0; i < k.nonneg; ++i) out[i] = rhs[i] / lambda[i];
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
        const int d = k.soc_dims[blk], at = k.soc_start[blk];
        const auto lb = lambda.segment(at, d);
        const auto rb = rhs.segment(at, d);
        const double det = lb[0] * lb[0] - lb.tail(d - 1).squaredNorm();
        const double u0 = (lb[0] * rb[0] - lb.tail(d - 1).dot(rb.tail(d - 1))) / det;
        out[at] = u0;
        out.segment(at + 1, d - 1) =
            (rb.tail(d - 1) - u0 * lb.tail(d - 1)) / lb[0];
    }
    return out;
}

VectorXd cone_identity(const ConeLayout &k) {
    VectorXd e = VectorXd::Zero(k.total);
    for (int i = 0; i < k.nonneg; ++i) e[i] = 1.0;
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) e[k.soc_start[blk]] = 1.0;
    return e;
}

// Largest alpha >= 0 with u + alpha du in the cone (+inf if unlimited).
double max_step(const ConeLayout &k, const VectorXd &u, const VectorXd &du,
                int *blocker = nullptr) {
    double alpha = kInf;
    for (int i = 0; i < k.nonneg; ++i)
        if (du[i] < 0.0 && -u[i] / du[i] < alpha) {
            alpha = -u[i] / du[i];
            if (blocker) *blocker = i;
        }
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
        const int d = k.soc_dims[blk], at = k.soc_start[blk];
        const auto ub = u.segment(at, d);
        const auto db = du.segment(at, d);
        const double a = db[0] * db[0] - db.tail(d - 1).squaredNorm();
        const double b = 2.0 * (ub[0] * db[0] - ub.tail(d - 1).dot(db.tail(d - 1)));
        const double un1 = ub.tail(d - 1).norm();
        const double c = (ub[0] - un1) * (ub[0] + un1);
        // first positive root of a t^2 + b t + c = 0 (c > 0 inside the cone)
        double root = kInf;
        if (std::abs(a) < 1e-300) {
            if (b < 0.0) root = -c / b;
        } else {
            const double disc = b * b - 4.0 * a * c;
            if (disc >= 0.0) {
                const double sq = std::sqrt(disc);
                const double q = -0.5 * (b + (b >= 0 ? sq : -sq));
                double r1 = q / a;
                double r2 = (q != 0.0) ? c / q : kInf;
                if (r1 > r2) std::swap(r1, r2);
                if (r1 > 0.0) root = r1;
                else if (r2 > 0.0 && a < 0.0) root = r2;
            } else if (a < 0.0) {
                root = 0.0; // should not happen inside the cone
            }
        }
        if (root < alpha) {
            alpha = root;
            if (blocker) *blocker = k.nonneg + static_cast<int>(blk);
        }
    }
    return alpha;
}

// Shift a point into the cone interior: u + (1 + viol) e when needed.
void shift_into_cone(const ConeLayout &k, VectorXd &u) {
    double viol = -kInf;
    for (int i = 0; i < k.nonneg; ++i) viol = std::max(viol, -u[i]);
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
        const int d = k.soc_dims[blk], at = k.soc_start[blk];
        viol = std::max(viol, u.segment(at + 1, d - 1).norm() - u[at]);
    }
    if (k.total == 0) return;
    if (viol >= 0.0) {
        VectorXd e = cone_identity(k);
        u += (1.0 + viol) * e;
    }
}

struct KktSystem {
    const SpMat &a;
    const SpMat &g;
    const ConeLayout &k;
    int n, p, m, dim;
    double delta;
    Eigen::SimplicialLDLT<SpMat> ldlt;
    // pivoted fallback for iterates where the no-pivoting LDLT hits a zero
    Eigen::SparseLU<SpMat> lu;
    bool use_lu = false;
    bool analyzed = false;

    KktSystem(const SpMat &a_, const SpMat &g_, const ConeLayout &k_, double delta_)
        : a(a_), g(g_), k(k_), n(static_cast<int>(a_.cols())),
          p(static_cast<int>(a_.rows())), m(static_cast<int>(g_.rows())),
          dim(n + p + m), delta(delta_) {}

    SpMat assemble(const Scalings &sc) const {
        std::vector<Triplet> t;
        t.reserve(static_cast<size_t>(a.nonZeros() + g.nonZeros()) * 2 + dim + 16 * k.soc_dims.size());
        for (int i = 0; i < n; ++i) t.emplace_back(i, i, delta);
        for (int outer = 0; outer < a.outerSize(); ++outer)
            for (SpMat::InnerIterator it(a, outer); it; ++it) {
                t.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
                t.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()), it.value());
            }
        for (int i = 0; i < p; ++i) t.emplace_back(n + i, n + i, -delta);
        for (int outer = 0; outer < g.outerSize(); ++outer)
            for (SpMat::InnerIterator it(g, outer); it; ++it) {
                t.emplace_back(n + p + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
                t.emplace_back(static_cast<int>(it.col()), n + p + static_cast<int>(it.row()), it.value());
            }
        for (int i = 0; i < k.nonneg; ++i)
            t.emplace_back(n + p + i, n + p + i, -sc.w2_nonneg[i] - delta);
        for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
            const int d = k.soc_dims[blk], at = n + p + k.soc_start[blk];
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) {
                    double v = -sc.socs[blk].w2(r, c) - (r == c ? delta : 0.0);
                    t.emplace_back(at + r, at + c, v);
                }
        }
        SpMat kkt(dim, dim);
        kkt.setFromTriplets(t.begin(), t.end());
        return kkt;
    }

    bool factorize(const Scalings &sc) {
        SpMat kkt = assemble(sc);
        if (!analyzed) {
            ldlt.analyzePattern(kkt);
            analyzed = true;
        }
        use_lu = false;
        ldlt.factorize(kkt);
        if (ldlt.info() == Eigen::Success) return true;
        lu.compute(kkt);
        use_lu = lu.info() == Eigen::Success;
        return use_lu;
    }

    // Unregularized operator K0 u, used for iterative refinement.
    VectorXd apply_unreg(const Scalings &sc, const VectorXd &u) const {
        VectorXd out(dim);
        const auto ux = u.head(n);
        const auto uy = u.segment(n, p);
        const auto uz = u.tail(m);
        out.head(n) = a.transpose() * uy + g.transpose() * uz;
        out.segment(n, p) = a * ux;
        out.tail(m) = g * ux - apply_w2(sc, k, uz);
        return out;
    }

    VectorXd solve(const Scalings &sc, const VectorXd &rhs, int refine) const {
        VectorXd u = use_lu ? lu.solve(rhs).eval() : ldlt.solve(rhs).eval();
        for (int r = 0; r < refine; ++r) {
            VectorXd res = rhs - apply_unreg(sc, u);
            u += use_lu ? lu.solve(res).eval() : ldlt.solve(res).eval();
        }
        return u;
    }
};

// Ruiz-style equilibration; scale vectors are divisors applied to
// rows (va, vg) and columns (vx) of [A; G]. SOC rows share one scale.
void equilibrate(SpMat &a, SpMat &g, VectorXd &b, VectorXd &h, VectorXd &c,
                 const ConeLayout &k, int iters, VectorXd &vx, VectorXd &va,
                 VectorXd &vg) {
    const int n = static_cast<int>(a.cols());
    const int p = static_cast<int>(a.rows());
    const int m = static_cast<int>(g.rows());
    vx = VectorXd::Ones(n);
    va = VectorXd::Ones(p);
    vg = VectorXd::Ones(m);

    auto sqrt_or_one = [](double v) { return v < 1e-12 ? 1.0 : std::sqrt(v); };

    for (int it = 0; it < iters; ++it) {
        VectorXd cx = VectorXd::Zero(n), ra = VectorXd::Zero(p), rg = VectorXd::Zero(m);
        for (int outer = 0; outer < a.outerSize(); ++outer)
            for (SpMat::InnerIterator e(a, outer); e; ++e) {
                const double v = std::abs(e.value());
                cx[e.col()] = std::max(cx[e.col()], v);
                ra[e.row()] = std::max(ra[e.row()], v);
            }
        for (int outer = 0; outer < g.outerSize(); ++outer)
            for (SpMat::InnerIterator e(g, outer); e; ++e) {
                const double v = std::abs(e.value());
                cx[e.col()] = std::max(cx[e.col()], v);
                rg[e.row()] = std::max(rg[e.row()], v);
            }
        for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
            const int d = k.soc_dims[blk], at = k.soc_start[blk];
            const double mx = rg.segment(at, d).maxCoeff();
            rg.segment(at, d).setConstant(mx);
        }
        cx = cx.unaryExpr(sqrt_or_one);
        ra = ra.unaryExpr(sqrt_or_one);
        rg = rg.unaryExpr(sqrt_or_one);
        for (int outer = 0; outer < a.outerSize(); ++outer)
            for (SpMat::InnerIterator e(a, outer); e; ++e)
                e.valueRef() /= ra[e.row()] * cx[e.col()];
        for (int outer = 0; outer < g.outerSize(); ++outer)
            for (SpMat::InnerIterator e(g, outer); e; ++e)
                e.valueRef() /= rg[e.row()] * cx[e.col()];
        vx = vx.cwiseProduct(cx);
        va = va.cwiseProduct(ra);
        vg = vg.cwiseProduct(rg);
    }
    b = b.cwiseQuotient(va);
    h = h.cwiseQuotient(vg);
    c = c.cwiseQuotient(vx);
}

} // namespace

RawSolution EmbeddedIpm::solve_standard(const conic::StandardForm &sf,
                                        const SolverSettings &st) {
    using conic::SolveStatus;

    SpMat a = sf.a, g = sf.g;
    VectorXd b = sf.b, h = sf.h, c = sf.c;
    const int n = static_cast<int>(c.size());
    ConeLayout k = ConeLayout::make(sf.nonneg_count, sf.soc_dims);
    const int m = k.total;
    if (static_cast<int>(g.rows()) != m)
        throw ModelError("cone dimensions do not match G rows");
    if (static_cast<int>(a.cols()) != n || static_cast<int>(g.cols()) != n)
        throw ModelError("matrix column counts do not match objective size");
    const int p = static_cast<int>(a.rows());

    VectorXd vx, va, vg;
    equilibrate(a, g, b, h, c, k, st.equilibrate_iters, vx, va, vg);

    const double norm_b = std::max(1.0, b.norm());
    const double norm_h = std::max(1.0, h.norm());
    const double norm_c = std::max(1.0, c.norm());

    RawSolution out;
    auto finish = [&](SolveStatus status, const VectorXd &x, const VectorXd &y,
                      const VectorXd &z, const VectorXd &s, double gap,
                      double pres, double dres, int iters) {
        out.status = status;
        out.x = x.cwiseQuotient(vx);
        out.y = y.cwiseQuotient(va);
        out.z = z.cwiseQuotient(vg);
        out.s = s.cwiseProduct(vg);
        out.objective = sf.c.dot(out.x) + sf.offset;
        out.gap = gap;
        out.primal_residual = pres;
        out.dual_residual = dres;
        out.iterations = iters;
        return out;
    };

    // --- initial point -----------------------------------------------------
    Scalings sc;
    sc.w2_nonneg = VectorXd::Ones(k.nonneg);
    sc.socs.resize(k.soc_dims.size());
    for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
        const int d = k.soc_dims[blk];
        sc.socs[blk].w = MatrixXd::Identity(d, d);
        sc.socs[blk].w2 = MatrixXd::Identity(d, d);
        sc.socs[blk].w_llt.compute(sc.socs[blk].w);
    }
    sc.lambda = VectorXd::Zero(m);

    double delta = st.regularization;
    KktSystem kkt(a, g, k, delta);
    for (int tries = 0;; ++tries) {
        kkt.delta = delta;
        if (kkt.factorize(sc)) break;
        delta *= 100.0;
        if (tries >= 3)
            throw SolverError("initial KKT factorization failed");
    }

    VectorXd rhs1 = VectorXd::Zero(kkt.dim);
    rhs1.segment(n, p) = b;
    rhs1.tail(m) = h;
    VectorXd u_init1 = kkt.solve(sc, rhs1, st.refine_steps);

    VectorXd rhs2 = VectorXd::Zero(kkt.dim);
    rhs2.head(n) = -c;
    VectorXd u_init2 = kkt.solve(sc, rhs2, st.refine_steps);

    VectorXd x = u_init1.head(n);
    VectorXd y = u_init2.segment(n, p);
    VectorXd s = -u_init1.tail(m);
    VectorXd z = u_init2.tail(m);
    shift_into_cone(k, s);
    shift_into_cone(k, z);
    double tau = 1.0, kappa = 1.0;

    double best_gap = kInf;
    VectorXd bx = x, by = y, bz = z, bs = s;
    double btau = tau;
    double bpres = kInf, bdres = kInf, brelgap = kInf;

    const VectorXd e = cone_identity(k);
    const double deg = static_cast<double>(k.degree) + 1.0;

    auto meets_tolerance = [&st](double pres, double dres, double gap,
                                 double relgap) {
        return pres <= st.tolerance && dres <= st.tolerance &&
               (gap <= st.tolerance || relgap <= 0.1 * st.tolerance);
    };
    // fallback when the complementarity floor is reached: standard
    // relative-gap criterion
    auto meets_relaxed = [&st](double pres, double dres, double relgap) {
        return pres <= st.tolerance && dres <= st.tolerance &&
               relgap <= st.tolerance;
    };
    int stalled = 0;

    int iter = 0;
    for (; iter < st.max_iterations; ++iter) {
        // residuals of the homogeneous embedding
        VectorXd rx = a.transpose() * y + g.transpose() * z + c * tau;
        VectorXd ry = a * x - b * tau;
        VectorXd rz = g * x + s - h * tau;
        const double rtau = c.dot(x) + b.dot(y) + h.dot(z) + kappa;

        const double pcost = c.dot(x) / tau;
        const double gap_c = (m > 0 ? s.dot(z) : 0.0) / (tau * tau);
        const double relgap = std::abs(gap_c) / std::max(1.0, std::abs(pcost));
        const double pres =
            std::max(ry.norm() / norm_b, rz.norm() / norm_h) / tau;
        const double dres = rx.norm() / norm_c / tau;
        const double mu = ((m > 0 ? s.dot(z) : 0.0) + tau * kappa) / deg;

        if (st.verbosity > 0)
            std::printf("ipm %3d  gap %9.2e pres %9.2e dres %9.2e tau %8.2e kappa %8.2e mu %8.2e\n",
                        iter, gap_c, pres, dres, tau, kappa, mu);
        conic::IterationStat stat;
        stat.iter = iter;
        stat.gap = gap_c;
        stat.pres = pres;
        stat.dres = dres;
        stat.tau = tau;
        stat.kappa = kappa;

        if (gap_c < 0.99 * best_gap) stalled = 0;
        else ++stalled;
        if (gap_c < best_gap && pres < 1e3 * bpres) {
            best_gap = gap_c;
            bx = x; by = y; bz = z; bs = s; btau = tau;
            bpres = pres; bdres = dres; brelgap = relgap;
        }
        if (stalled >= 5 && meets_relaxed(bpres, bdres, brelgap)) {
            out.trace.push_back(stat);
            return finish(SolveStatus::optimal, bx / btau, by / btau,
                          bz / btau, bs / btau, best_gap, bpres, bdres, iter);
        }

        if (meets_tolerance(pres, dres, gap_c, relgap)) {
            out.trace.push_back(stat);
            return finish(SolveStatus::optimal, x / tau, y / tau, z / tau,
                          s / tau, gap_c, pres, dres, iter);
        }

        // infeasibility certificates from the embedding rays
        const double bhz = b.dot(y) + h.dot(z);
        if (bhz < 0.0 && tau < kappa) {
            const double pinfres =
                (a.transpose() * y + g.transpose() * z).norm() / norm_c / (-bhz);
            if (pinfres <= st.tolerance) {
                out.trace.push_back(stat);
                VectorXd yc = y / (-bhz), zc = z / (-bhz);
                return finish(SolveStatus::infeasible, VectorXd::Zero(n), yc, zc,
                              VectorXd::Zero(m), gap_c, pres, dres, iter);
            }
        }
        const double cx = c.dot(x);
        if (cx < 0.0 && tau < kappa) {
            const double dinfres =
                std::max((a * x).norm() / norm_b, (g * x + s).norm() / norm_h) /
                (-cx);
            if (dinfres <= st.tolerance) {
                out.trace.push_back(stat);
                VectorXd xc = x / (-cx), sc2 = s / (-cx);
                return finish(SolveStatus::unbounded, xc, VectorXd::Zero(p),
                              VectorXd::Zero(m), sc2, gap_c, pres, dres, iter);
            }
        }

        if (m > 0 && !update_scalings(s, z, k, sc)) {
            out.trace.push_back(stat);
            break; // iterate left the cone numerically; return best point
        }
        kkt.delta = delta;
        for (int tries = 0;; ++tries) {
            if (kkt.factorize(sc)) break;
            kkt.delta *= 10.0;
            if (st.verbosity > 1)
                std::printf("ipm: factorization retry, delta=%.1e\n", kkt.delta);
            if (tries >= 6) throw SolverError("KKT factorization failed after regularization");
        }
        // direction accuracy limits the reachable complementarity; polish
        // harder once the endgame starts
        const int refine = st.refine_steps + (mu < 1e-6 ? 2 : 0);

        // constant direction u1 = K^{-1} (-c, b, h)
        VectorXd rhs_u1(kkt.dim);
        rhs_u1.head(n) = -c;
        rhs_u1.segment(n, p) = b;
        rhs_u1.tail(m) = h;
        const VectorXd u1 = kkt.solve(sc, rhs_u1, refine);
        const double phi_u1 =
            c.dot(u1.head(n)) + b.dot(u1.segment(n, p)) + h.dot(u1.tail(m));

        auto direction = [&](const VectorXd &ds_c, double dk_c, double rscale,
                             VectorXd &dx, VectorXd &dy, VectorXd &dz,
                             VectorXd &ds, double &dtau, double &dkappa) {
            VectorXd rhs(kkt.dim);
            rhs.head(n) = -rscale * rx;
            rhs.segment(n, p) = -rscale * ry;
            if (m > 0)
                rhs.tail(m) = -rscale * rz - apply_w(sc, k, jordan_div(k, sc.lambda, ds_c));
            const VectorXd u2 = kkt.solve(sc, rhs, refine);
            const double phi_u2 =
                c.dot(u2.head(n)) + b.dot(u2.segment(n, p)) + h.dot(u2.tail(m));
            const double denom = phi_u1 - kappa / tau;
            dtau = (-rscale * rtau - dk_c / tau - phi_u2) / denom;
            dx = u2.head(n) + dtau * u1.head(n);
            dy = u2.segment(n, p) + dtau * u1.segment(n, p);
            dz = u2.tail(m) + dtau * u1.tail(m);
            // scaled complementarity form: ds = W(lambda \ ds_c) - W^2 dz;
            // cone-consistent where the linear-residual form is not
            if (m > 0)
                ds = apply_w(sc, k, jordan_div(k, sc.lambda, ds_c)) -
                     apply_w2(sc, k, dz);
            else
                ds = VectorXd(0);
            dkappa = (dk_c - kappa * dtau) / tau;
        };

        // predictor
        VectorXd ds_aff = m > 0 ? VectorXd(-jordan_prod(k, sc.lambda, sc.lambda))
                                : VectorXd(0);
        VectorXd dxa, dya, dza, dsa;
        double dtaua, dkappaa;
        direction(ds_aff, -tau * kappa, 1.0, dxa, dya, dza, dsa, dtaua, dkappaa);

        double alpha_aff = m > 0 ? std::min(max_step(k, s, dsa), max_step(k, z, dza))
                                 : kInf;
        if (dtaua < 0.0) alpha_aff = std::min(alpha_aff, -tau / dtaua);
        if (dkappaa < 0.0) alpha_aff = std::min(alpha_aff, -kappa / dkappaa);
        alpha_aff = std::min(alpha_aff, 1.0);

        double sigma = std::pow(1.0 - alpha_aff, 3);
        sigma = std::clamp(sigma, 0.0, 0.99);

        // corrector
        VectorXd ds_comb(0);
        if (m > 0) {
            VectorXd corr = jordan_prod(k, apply_w_inv(sc, k, dsa), apply_w(sc, k, dza));
            ds_comb = -jordan_prod(k, sc.lambda, sc.lambda) - corr + sigma * mu * e;
        }
        const double dk_comb = -tau * kappa - dtaua * dkappaa + sigma * mu;

        VectorXd dx, dy, dz, ds;
        double dtau, dkappa;
        direction(ds_comb, dk_comb, 1.0 - sigma, dx, dy, dz, ds, dtau, dkappa);

        int bs_ = -1, bz_ = -1;
        const double alpha_s = m > 0 ? max_step(k, s, ds, &bs_) : kInf;
        const double alpha_z = m > 0 ? max_step(k, z, dz, &bz_) : kInf;
        double alpha = std::min(alpha_s, alpha_z);
        if (dtau < 0.0) alpha = std::min(alpha, -tau / dtau);
        if (dkappa < 0.0) alpha = std::min(alpha, -kappa / dkappa);
        if (st.verbosity > 2)
            std::printf("      comb step: alpha_s %.2e (blk %d) alpha_z %.2e (blk %d)\n",
                        alpha_s, bs_, alpha_z, bz_);
        alpha = std::min(st.step_fraction * alpha, 1.0);

        auto strictly_inside = [&](const VectorXd &v) {
            for (int i = 0; i < k.nonneg; ++i)
                if (v[i] <= 0.0) return false;
            for (size_t blk = 0; blk < k.soc_dims.size(); ++blk) {
                const int d = k.soc_dims[blk], at = k.soc_start[blk];
                if (v[at] <= v.segment(at + 1, d - 1).norm()) return false;
            }
            return true;
        };
        bool stepped = false;
        for (int bt = 0; bt < 30; ++bt) {
            VectorXd sn = s + alpha * ds;
            VectorXd zn = z + alpha * dz;
            const double taun = tau + alpha * dtau;
            const double kappan = kappa + alpha * dkappa;
            if (taun > 0.0 && kappan > 0.0 && strictly_inside(sn) &&
                strictly_inside(zn)) {
                x += alpha * dx;
                y += alpha * dy;
                s.swap(sn);
                z.swap(zn);
                tau = taun;
                kappa = kappan;
                stepped = true;
                break;
            }
            alpha *= 0.5;
        }
        stat.step = alpha;
        stat.sigma = sigma;
        out.trace.push_back(stat);
        if (st.verbosity > 1)
            std::printf("      alpha_aff %8.2e sigma %8.2e alpha %8.2e stepped %d\n",
                        alpha_aff, sigma, alpha, (int)stepped);
        if (!stepped) break; // numerically cornered; fall through to best
    }

    // the loop ended without an in-loop certificate; the best iterate may
    // still satisfy the tolerance (stall in the very last step)
    const SolveStatus status =
        meets_tolerance(bpres, bdres, best_gap, brelgap) ||
                meets_relaxed(bpres, bdres, brelgap)
            ? SolveStatus::optimal
            : SolveStatus::max_iter;
    finish(status, bx / btau, by / btau, bz / btau, bs / btau, best_gap, bpres,
           bdres, iter);
    return out;
}

ConicBackend &default_backend() {
    static EmbeddedIpm backend;
    return backend;
}

RawSolution solve_standard(const conic::StandardForm &sf,
                           const SolverSettings &settings) {
    return default_backend().solve_standard(sf, settings);
}

conic::ConicSolution solve(const conic::ConicProgram &program,
                           const SolverSettings &settings,
                           ConicBackend *backend) {
    using conic::StandardForm;
    if (!program.sealed())
        throw ModelError("program must be sealed before solving");
    StandardForm sf = assemble_standard_form(program);
    RawSolution raw = (backend ? *backend : default_backend())
                          .solve_standard(sf, settings);

    conic::ConicSolution sol;
    sol.status = raw.status;
    sol.primal = raw.x;
    // report the certified cone slacks as the cone-member values: the point
    // is cone-feasible exactly, with the discrepancy (at primal-residual
    // level) carried by the linkage equalities instead
    if (raw.status == conic::SolveStatus::optimal) {
        for (size_t r = 0; r < sf.cone_origin.size(); ++r) {
            const auto &org = sf.cone_origin[r];
            if (org.kind != StandardForm::RowKind::soc_member) continue;
            const conic::SocBlock &sb = program.soc_blocks()[org.index];
            const int cols[4] = {sb.d, sb.c, sb.s, sb.e};
            sol.primal[cols[org.component]] = raw.s[static_cast<long>(r)];
        }
    }
    sol.objective = program.objective().dot(sol.primal) + program.offset();
    sol.gap = raw.gap;
    sol.primal_residual = raw.primal_residual;
    sol.dual_residual = raw.dual_residual;
    sol.iterations = raw.iterations;
    sol.trace = std::move(raw.trace);

    const int n = program.num_vars();
    sol.eq_duals = Eigen::VectorXd::Zero(program.num_eq_rows());
    sol.ineq_duals = Eigen::VectorXd::Zero(program.num_ineq_rows());
    sol.lower_duals = Eigen::VectorXd::Zero(n);
    sol.upper_duals = Eigen::VectorXd::Zero(n);
    sol.cone_duals.assign(program.soc_blocks().size(), Eigen::Vector4d::Zero());

    for (size_t r = 0; r < sf.eq_origin.size(); ++r) {
        const auto &org = sf.eq_origin[r];
        const double lam = -raw.y[static_cast<long>(r)];
        if (org.kind == StandardForm::RowKind::model_eq)
            sol.eq_duals[org.index] = lam;
        else // fixed variable
            sol.lower_duals[org.index] = lam;
    }
    std::vector<Eigen::Vector4d> blocks(program.soc_blocks().size(),
                                        Eigen::Vector4d::Zero());
    for (size_t r = 0; r < sf.cone_origin.size(); ++r) {
        const auto &org = sf.cone_origin[r];
        const double zr = raw.z[static_cast<long>(r)];
        switch (org.kind) {
        case StandardForm::RowKind::model_ineq: sol.ineq_duals[org.index] = zr; break;
        case StandardForm::RowKind::bound_lower: sol.lower_duals[org.index] = zr; break;
        case StandardForm::RowKind::bound_upper: sol.upper_duals[org.index] = zr; break;
        case StandardForm::RowKind::soc_member:
            blocks[org.index][org.component] = zr;
            break;
        default: break;
        }
    }
    // standard block order is (d, c, s, e); report as (c, s, e, d)
    for (size_t blk = 0; blk < blocks.size(); ++blk) {
        const Eigen::Vector4d &v = blocks[blk];
        sol.cone_duals[blk] = Eigen::Vector4d(v[1], v[2], v[3], v[0]);
    }
    return sol;
}

} // namespace ropf::ipm
