#include "qcb/covering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "qcb/parallel.hpp"
#include "qcb/rng.hpp"

namespace qcb::covering {

using linalg::hs_norm;
using linalg::mat_exp;
using linalg::mat_log;
using linalg::Traceless;

namespace {

double frobenius_inner(const Mat& a, const Mat& b) {
    double s = 0.0;
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j) s += a.at(i, j) * b.at(i, j);
    return s;
}

// Gauss-Jordan inverse for the one matrix in the module that can exceed
// kMaxDim (the N x N barycentric system, N up to 25).
std::vector<double> dense_inverse(std::vector<double> a, int n,
                                  const std::string& singular_message) {
    std::vector<double> inv(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(i * n + i)] = 1.0;
    double max_entry = 0.0;
    for (double v : a) max_entry = std::max(max_entry, std::abs(v));
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[static_cast<std::size_t>(r * n + col)]) >
                std::abs(a[static_cast<std::size_t>(pivot * n + col)]))
                pivot = r;
        double p = a[static_cast<std::size_t>(pivot * n + col)];
        if (std::abs(p) <= 1e-12 * (max_entry + 1.0))
            throw CoveringError(singular_message);
        if (pivot != col) {
            for (int j = 0; j < n; ++j) {
                std::swap(a[static_cast<std::size_t>(col * n + j)],
                          a[static_cast<std::size_t>(pivot * n + j)]);
                std::swap(inv[static_cast<std::size_t>(col * n + j)],
                          inv[static_cast<std::size_t>(pivot * n + j)]);
            }
        }
        double scale = 1.0 / p;
        for (int j = 0; j < n; ++j) {
            a[static_cast<std::size_t>(col * n + j)] *= scale;
            inv[static_cast<std::size_t>(col * n + j)] *= scale;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            double f = a[static_cast<std::size_t>(r * n + col)];
            if (f == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                a[static_cast<std::size_t>(r * n + j)] -=
                    f * a[static_cast<std::size_t>(col * n + j)];
                inv[static_cast<std::size_t>(r * n + j)] -=
                    f * inv[static_cast<std::size_t>(col * n + j)];
            }
        }
    }
    return inv;
}

// All nonnegative integer N-tuples summing to total, lexicographic.
std::vector<std::vector<int>> enumerate_compositions(int total, int parts) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(parts), 0);
    auto rec = [&](auto&& self, int pos, int remaining) -> void {
        if (pos == parts - 1) {
            cur[static_cast<std::size_t>(pos)] = remaining;
            out.push_back(cur);
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            cur[static_cast<std::size_t>(pos)] = v;
            self(self, pos + 1, remaining - v);
        }
    };
    rec(rec, 0, total);
    return out;
}

std::string describe_coords(const std::vector<double>& y) {
    std::ostringstream os;
    os.precision(17);
    os << "[";
    for (std::size_t i = 0; i < y.size(); ++i) os << (i ? ", " : "") << y[i];
    os << "]";
    return os.str();
}

}  // namespace

std::vector<Mat> algebra_basis(int d) {
    if (d < 2) throw CoveringError("algebra basis requires dimension >= 2");
    std::vector<Mat> basis;
    basis.reserve(static_cast<std::size_t>(d * d - 1));
    for (int k = 1; k < d; ++k) {
        Mat b(d);
        double s = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
        for (int i = 0; i < k; ++i) b.at(i, i) = s;
        b.at(k, k) = -k * s;
        basis.push_back(b);
    }
    const double c = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            Mat sym(d);
            sym.at(i, j) = c;
            sym.at(j, i) = c;
            basis.push_back(sym);
            Mat skew(d);
            skew.at(i, j) = c;
            skew.at(j, i) = -c;
            basis.push_back(skew);
        }
    }
    return basis;
}

std::vector<double> algebra_coords(const Mat& x) {
    const auto basis = algebra_basis(x.dim());
    std::vector<double> coords(basis.size());
    Mat recon(x.dim());
    for (std::size_t i = 0; i < basis.size(); ++i) {
        coords[i] = frobenius_inner(x, basis[i]);
        recon = recon + basis[i] * coords[i];
    }
    double residual = hs_norm(x - recon);
    if (residual > 1e-8 * (1.0 + hs_norm(x)))
        throw CoveringError("matrix lies outside the traceless span",
                            describe_coords(coords));
    return coords;
}

Mat from_algebra_coords(int d, const std::vector<double>& coords) {
    const auto basis = algebra_basis(d);
    if (coords.size() != basis.size())
        throw CoveringError("coordinate count does not match the algebra dimension");
    Mat x(d);
    for (std::size_t i = 0; i < basis.size(); ++i) x = x + basis[i] * coords[i];
    return x;
}

SimplexRegion::SimplexRegion(std::vector<std::vector<double>> vertices,
                             double scale)
    : n_(static_cast<int>(vertices.size())),
      scale_(scale),
      vertices_(std::move(vertices)) {
    if (n_ < 2) throw CoveringError("simplex needs at least two vertices");
    if (!(scale_ > 0.0)) throw CoveringError("simplex scale must be positive");
    for (const auto& v : vertices_)
        if (static_cast<int>(v.size()) != n_ - 1)
            throw CoveringError("vertex dimension does not match simplex order");
    std::vector<double> system(static_cast<std::size_t>(n_) * n_, 1.0);
    for (int k = 0; k + 1 < n_; ++k)
        for (int j = 0; j < n_; ++j)
            system[static_cast<std::size_t>(k * n_ + j)] =
                vertices_[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    affine_inverse_ = dense_inverse(std::move(system), n_,
                                    "degenerate vertex configuration");
    edge_ = 0.0;
    for (int i = 0; i < n_; ++i) {
        for (int j = i + 1; j < n_; ++j) {
            double d2 = 0.0;
            for (int k = 0; k + 1 < n_; ++k) {
                double diff = vertices_[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] -
                              vertices_[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
                d2 += diff * diff;
            }
            edge_ = std::max(edge_, std::sqrt(d2));
        }
    }
}

SimplexRegion SimplexRegion::regular(int n_vertices, double scale) {
    if (n_vertices < 2) throw CoveringError("simplex needs at least two vertices");
    const int n = n_vertices;
    // Rows u_k of the Gram-Schmidt chain orthogonal to (1,..,1); the vertex
    // coordinates are the columns, rescaled to unit length.
    std::vector<std::vector<double>> vertices(
        static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n - 1), 0.0));
    const double lift = std::sqrt(static_cast<double>(n) / (n - 1));
    for (int k = 1; k < n; ++k) {
        double s = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
        for (int i = 0; i < n; ++i) {
            double u = 0.0;
            if (i < k)
                u = s;
            else if (i == k)
                u = -k * s;
            vertices[static_cast<std::size_t>(i)][static_cast<std::size_t>(k - 1)] = u * lift;
        }
    }
    return SimplexRegion(std::move(vertices), scale);
}

std::vector<double> SimplexRegion::barycentric(const std::vector<double>& y) const {
    if (static_cast<int>(y.size()) != n_ - 1)
        throw CoveringError("point dimension does not match simplex order");
    std::vector<double> lambda(static_cast<std::size_t>(n_), 0.0);
    for (int i = 0; i < n_; ++i) {
        double acc = affine_inverse_[static_cast<std::size_t>(i * n_ + (n_ - 1))];
        for (int k = 0; k + 1 < n_; ++k)
            acc += affine_inverse_[static_cast<std::size_t>(i * n_ + k)] *
                   y[static_cast<std::size_t>(k)];
        lambda[static_cast<std::size_t>(i)] = acc;
    }
    return lambda;
}

double SimplexRegion::membership(const std::vector<double>& y) const {
    std::vector<double> scaled(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) scaled[k] = y[k] / scale_;
    const auto lambda = barycentric(scaled);
    return *std::min_element(lambda.begin(), lambda.end());
}

double region_membership(const Mat& x, const SimplexRegion& region) {
    const auto coords = algebra_coords(x);
    if (static_cast<int>(coords.size()) != region.ambient_dim())
        throw CoveringError("algebra dimension does not match the region");
    return region.membership(coords);
}

SimplexFamily build_simplex_generators(int d, double t, double r) {
    if (!(t > 0.0) || !(r > 0.0))
        throw CoveringError("generator parameters must be positive");
    const int n = d * d;
    SimplexRegion region = SimplexRegion::regular(n, r);
    GeneratorFamily family;
    for (int j = 0; j < n; ++j) {
        Mat x = from_algebra_coords(d, region.vertex(j)) * (-t * r);
        family.maps.push_back(LocalMap::affine(mat_exp(Traceless(x)), Vec(d)));
        family.labels.push_back("g" + std::to_string(j));
    }
    family.metadata["t"] = t;
    family.metadata["r"] = r;
    family.metadata["dimension"] = static_cast<double>(d);
    return SimplexFamily{std::move(family), std::move(region), t, r};
}

CoveringCertificate verify_covering_group(const GeneratorFamily& family,
                                          const SimplexRegion& region,
                                          int grid_per_axis, int n_threads) {
    if (family.size() == 0) throw CoveringError("empty generator family");
    if (grid_per_axis < 1) throw CoveringError("grid resolution must be >= 1");
    const int d = family.maps.front().matrix().dim();
    if (region.ambient_dim() != d * d - 1)
        throw CoveringError("region dimension does not match the family algebra");
    const int n = region.n_vertices();
    const double r = region.scale();
    const int m = grid_per_axis;

    const auto comps = enumerate_compositions(m, n);
    const int n_samples = static_cast<int>(comps.size());

    std::vector<std::vector<double>> points(comps.size());
    for (std::size_t s = 0; s < comps.size(); ++s) {
        std::vector<double> y(static_cast<std::size_t>(n - 1), 0.0);
        for (int j = 0; j < n; ++j) {
            double w = r * comps[s][static_cast<std::size_t>(j)] / m;
            const auto& v = region.vertex(j);
            for (int k = 0; k + 1 < n; ++k) y[static_cast<std::size_t>(k)] += w * v[static_cast<std::size_t>(k)];
        }
        points[s] = std::move(y);
    }

    struct SampleResult {
        double margin;
        int witness;
    };
    auto results = qcb::parallel_map<SampleResult>(
        n_threads, comps.size(), [&](std::size_t s) {
            Mat a = mat_exp(Traceless(from_algebra_coords(d, points[s])));
            double best = -1e300;
            int arg = -1;
            for (int j = 0; j < family.size(); ++j) {
                Mat moved = family.maps[static_cast<std::size_t>(j)].matrix() * a;
                double margin = region_membership(mat_log(moved).mat(), region);
                if (margin > best) {
                    best = margin;
                    arg = j;
                }
            }
            return SampleResult{best, arg};
        });

    CoveringCertificate cert;
    cert.kind = "group_covering";
    cert.n_samples = n_samples;
    cert.witness_map.reserve(comps.size());
    double worst = 1e300;
    std::size_t worst_index = 0;
    for (std::size_t s = 0; s < results.size(); ++s) {
        cert.witness_map.push_back(results[s].witness);
        if (results[s].margin < worst) {
            worst = results[s].margin;
            worst_index = s;
        }
    }
    cert.worst_margin = worst;

    // Empirical margin rate over pairs that differ by one unit transfer
    // between barycentric axes; together with the grid spacing this turns the
    // finite sample into a usable slack bound.
    std::map<std::vector<int>, std::size_t> index_of;
    for (std::size_t s = 0; s < comps.size(); ++s) index_of[comps[s]] = s;
    double rate = 0.0;
    for (std::size_t s = 0; s < comps.size(); ++s) {
        for (int a = 0; a < n; ++a) {
            if (comps[s][static_cast<std::size_t>(a)] == 0) continue;
            for (int b = 0; b < n; ++b) {
                if (b == a) continue;
                std::vector<int> nb = comps[s];
                nb[static_cast<std::size_t>(a)] -= 1;
                nb[static_cast<std::size_t>(b)] += 1;
                auto it = index_of.find(nb);
                if (it == index_of.end() || it->second < s) continue;
                double dist = 0.0;
                const auto& va = region.vertex(a);
                const auto& vb = region.vertex(b);
                for (int k = 0; k + 1 < n; ++k) {
                    double diff = (va[static_cast<std::size_t>(k)] - vb[static_cast<std::size_t>(k)]) * r / m;
                    dist += diff * diff;
                }
                dist = std::sqrt(dist);
                if (dist <= 0.0) continue;
                rate = std::max(rate, std::abs(results[s].margin - results[it->second].margin) / dist);
            }
        }
    }
    cert.lipschitz_slack = rate;
    cert.grid_resolution = r * region.edge_length() / m;
    cert.passed = cert.worst_margin > cert.lipschitz_slack * cert.grid_resolution;
    if (!cert.passed) {
        std::ostringstream os;
        os.precision(17);
        os << "worst sample at grid node (";
        for (int j = 0; j < n; ++j) os << (j ? "," : "") << comps[worst_index][static_cast<std::size_t>(j)];
        os << ")/" << m << " with margin " << worst;
        cert.failure_witness = os.str();
    }
    return cert;
}

TuneResult auto_tune_parameters(int d, double t_lo, double t_hi, double r_lo,
                                double r_hi, int grid_per_axis, int n_threads) {
    if (!(t_lo > 0.0) || !(r_lo > 0.0) || t_hi < t_lo || r_hi < r_lo)
        throw CoveringError("empty or non-positive tuning range");
    const int kGrid = 7;
    // Coarse grids keep the search cheap; only the final certificate uses the
    // requested resolution.
    const int coarse = std::max(2, std::min(grid_per_axis, d >= 3 ? 2 : 4));

    double best_t = t_lo, best_r = r_lo, best_margin = -1e300;
    double ct_lo = t_lo, ct_hi = t_hi, cr_lo = r_lo, cr_hi = r_hi;
    for (int round = 0; round < 3; ++round) {
        double local_best = -1e300, lt = ct_lo, lr = cr_lo;
        for (int i = 0; i < kGrid; ++i) {
            double t = kGrid == 1 ? ct_lo : ct_lo + (ct_hi - ct_lo) * i / (kGrid - 1);
            for (int j = 0; j < kGrid; ++j) {
                double r = cr_lo + (cr_hi - cr_lo) * j / (kGrid - 1);
                SimplexFamily fam = build_simplex_generators(d, t, r);
                CoveringCertificate cert;
                try {
                    cert = verify_covering_group(fam.family, fam.region, coarse, n_threads);
                } catch (const linalg::KernelError&) {
                    continue;  // log/exp breakdown at extreme parameters
                }
                if (cert.worst_margin > local_best) {
                    local_best = cert.worst_margin;
                    lt = t;
                    lr = r;
                }
            }
        }
        if (local_best > best_margin) {
            best_margin = local_best;
            best_t = lt;
            best_r = lr;
        }
        double t_step = (ct_hi - ct_lo) / (kGrid - 1);
        double r_step = (cr_hi - cr_lo) / (kGrid - 1);
        ct_lo = std::max(t_lo, best_t - t_step);
        ct_hi = std::min(t_hi, best_t + t_step);
        cr_lo = std::max(r_lo, best_r - r_step);
        cr_hi = std::min(r_hi, best_r + r_step);
    }

    SimplexFamily fam = build_simplex_generators(d, best_t, best_r);
    TuneResult result;
    result.t = best_t;
    result.r = best_r;
    result.certificate = verify_covering_group(fam.family, fam.region, grid_per_axis, n_threads);
    if (!result.certificate.passed)
        throw CoveringError("no parameters with a certified positive margin in range",
                            result.certificate.failure_witness);
    return result;
}

double BallDomain::margin(const Vec& x) const {
    if (model == frame::Model::euclidean) return radius - (x - center).norm();
    double dot = std::clamp(x.dot(center), -1.0, 1.0);
    return radius - std::acos(dot);
}

double window_margin(const FrameWindow& window, const FramePoint& w) {
    if (auto* simplex = std::get_if<SimplexWindow>(&window))
        return region_membership(mat_log(w.frame).mat(), simplex->region);
    if (auto* size = std::get_if<SizeWindow>(&window)) {
        if (w.base.model != size->base.model)
            throw CoveringError("frame point model does not match the window");
        double m_size = (size->size_bound - frame_size(w)) / size->size_bound;
        double m_base = size->base.margin(w.base.coords) / size->base.radius;
        return std::min(m_size, m_base);
    }
    const auto& prod = std::get<ProductWindow>(window);
    if (w.base.model != prod.base.model)
        throw CoveringError("frame point model does not match the window");
    double m_frame = region_membership(mat_log(w.frame).mat(), prod.region);
    double m_base = prod.base.margin(w.base.coords) / prod.base.radius;
    return std::min(m_frame, m_base);
}

namespace {

double simplex_size_bound(const SimplexRegion& region) {
    const int n = region.n_vertices();
    int res = n <= 4 ? 12 : (n <= 9 ? 4 : 2);
    // Matrix dimension recovered from n = d^2.
    int d = static_cast<int>(std::llround(std::sqrt(static_cast<double>(n))));
    if (d * d != n)
        throw CoveringError("simplex order is not a squared matrix dimension");
    double bound = 0.0;
    for (const auto& comp : enumerate_compositions(res, n)) {
        std::vector<double> y(static_cast<std::size_t>(n - 1), 0.0);
        for (int j = 0; j < n; ++j) {
            double w = region.scale() * comp[static_cast<std::size_t>(j)] / res;
            const auto& v = region.vertex(j);
            for (int k = 0; k + 1 < n; ++k) y[static_cast<std::size_t>(k)] += w * v[static_cast<std::size_t>(k)];
        }
        bound = std::max(bound, hs_norm(mat_exp(Traceless(from_algebra_coords(d, y)))));
    }
    return bound;
}

}  // namespace

double window_size_bound(const FrameWindow& window) {
    if (auto* size = std::get_if<SizeWindow>(&window)) return size->size_bound;
    if (auto* simplex = std::get_if<SimplexWindow>(&window))
        return simplex_size_bound(simplex->region);
    return simplex_size_bound(std::get<ProductWindow>(window).region);
}

namespace {

// Householder matrix sending e_1 to the unit vector along v; its remaining
// columns are an orthonormal basis of the orthocomplement.
Mat householder_from_first_axis(const Vec& v) {
    const int d = v.dim();
    double norm = v.norm();
    if (norm <= 0.0 || !std::isfinite(norm))
        throw CoveringError("zero direction vector");
    Vec u(d);
    for (int i = 0; i < d; ++i) u[i] = v[i] / norm;
    u[0] -= 1.0;
    double un = u.norm();
    Mat h = Mat::identity(d);
    if (un < 1e-14) return h;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) h.at(i, j) -= 2.0 * u[i] * u[j] / (un * un);
    return h;
}

std::vector<Vec> sample_ball_closure(const BallDomain& ball, int count,
                                     std::uint64_t seed) {
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(count));
    if (ball.model == frame::Model::euclidean) {
        const int d = ball.center.dim();
        int n_shells = std::max(2, static_cast<int>(std::llround(std::cbrt(static_cast<double>(count)))));
        int per_shell = std::max(1, (count - 1 + n_shells - 1) / n_shells);
        auto dirs = maps::direction_set(d, per_shell, qcb::child_seed(seed, 11));
        out.push_back(ball.center);
        for (int shell = 1; shell <= n_shells; ++shell) {
            // Equal-volume shells; the last one lies exactly on the boundary.
            double rad = ball.radius * std::pow(static_cast<double>(shell) / n_shells, 1.0 / d);
            for (const auto& u : dirs) out.push_back(ball.center + u * rad);
        }
        return out;
    }
    const int ambient = ball.center.dim();
    if (ball.radius > 3.14159265358979323846) {
        // Whole sphere: one global direction set.
        for (const auto& u : maps::direction_set(ambient, count, qcb::child_seed(seed, 12)))
            out.push_back(u);
        return out;
    }
    const int d = ambient - 1;
    int n_rings = std::max(2, static_cast<int>(std::llround(std::cbrt(static_cast<double>(count)))));
    int per_ring = std::max(1, (count - 1 + n_rings - 1) / n_rings);
    auto dirs = maps::direction_set(d, per_ring, qcb::child_seed(seed, 13));
    out.push_back(ball.center);
    for (int ring = 1; ring <= n_rings; ++ring) {
        double angle = ball.radius * ring / n_rings;
        for (const auto& u : dirs) {
            Vec tangent = frame::tangent_to_ambient(ball.center, u);
            out.push_back(ball.center * std::cos(angle) + tangent * std::sin(angle));
        }
    }
    return out;
}

}  // namespace

double restricted_norm(const Mat& dhat, const Vec& v_tangent) {
    const int d = dhat.dim();
    if (d == 1) return 0.0;
    Mat h = householder_from_first_axis(v_tangent);
    Mat moved = dhat * h;
    for (int i = 0; i < d; ++i) moved.at(i, 0) = 0.0;
    return linalg::operator_norm(moved);
}

AnalyticWindow build_analytic_window(const GeneratorFamily& family,
                                     const BallDomain& v, double epsilon,
                                     int n_base_samples, int n_dir_samples,
                                     std::uint64_t seed, int n_threads) {
    if (family.size() == 0) throw CoveringError("empty generator family");
    if (!(epsilon > 0.0) || !(epsilon < 1.0))
        throw CoveringError("contraction margin must lie in (0, 1)");
    frame::AmbientPoint probe{v.model, v.center};
    const int d = probe.manifold_dim();
    for (const auto& f : family.maps)
        if (f.model() != v.model || f.manifold_dim() != d)
            throw CoveringError("family maps do not act on the window domain");

    const auto bases = sample_ball_closure(v, n_base_samples, seed);
    const auto dirs = maps::direction_set(d, n_dir_samples, qcb::child_seed(seed, 21));

    struct BaseResult {
        double theta;
        bool ok;
        std::string witness;
    };
    auto results = qcb::parallel_map<BaseResult>(
        n_threads, bases.size(), [&](std::size_t bi) {
            const Vec& x = bases[bi];
            std::vector<Mat> dhats;
            std::vector<bool> lands_inside;
            double theta = 0.0;
            dhats.reserve(family.maps.size());
            for (const auto& f : family.maps) {
                Mat dh = f.normalized_tangent_derivative(x);
                theta = std::max(theta, linalg::operator_norm(dh));
                lands_inside.push_back(v.margin(f.apply(x)) > 0.0);
                dhats.push_back(dh);
            }
            for (const auto& u : dirs) {
                bool found = false;
                for (std::size_t fi = 0; fi < dhats.size(); ++fi) {
                    if (!lands_inside[fi]) continue;
                    if (restricted_norm(dhats[fi], u) <= 1.0 - epsilon) {
                        found = true;
                        break;
                    }
                }
                if (!found) {
                    std::ostringstream os;
                    os.precision(17);
                    os << "base [";
                    for (int k = 0; k < x.dim(); ++k) os << (k ? ", " : "") << x[k];
                    os << "] direction [";
                    for (int k = 0; k < u.dim(); ++k) os << (k ? ", " : "") << u[k];
                    os << "]";
                    return BaseResult{theta, false, os.str()};
                }
            }
            return BaseResult{theta, true, ""};
        });

    AnalyticWindow window;
    window.epsilon = epsilon;
    window.base = v;
    window.n_base_samples = static_cast<int>(bases.size());
    window.n_direction_samples = static_cast<int>(dirs.size());
    for (const auto& res : results) {
        if (!res.ok)
            throw CoveringError("no family map contracts orthogonally to a sampled direction",
                                res.witness);
        window.theta = std::max(window.theta, res.theta);
    }
    window.size_bound = std::pow(window.theta, 4) / epsilon;
    return window;
}

namespace {

struct WindowSample {
    FramePoint point;
};

Vec seeded_unit_vector(qcb::Rng& gen, int dim) {
    while (true) {
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v[i] = gen.normal();
        double n = v.norm();
        if (n > 1e-6) return v * (1.0 / n);
    }
}

Vec sample_base_point(qcb::Rng& gen, const BallDomain& ball, bool boundary) {
    if (ball.model == frame::Model::euclidean) {
        const int d = ball.center.dim();
        Vec dir = seeded_unit_vector(gen, d);
        double u = boundary ? 1.0 : std::pow(gen.uniform(), 1.0 / d);
        return ball.center + dir * (ball.radius * u);
    }
    const int ambient = ball.center.dim();
    if (ball.radius > 3.14159265358979323846) return seeded_unit_vector(gen, ambient);
    const int d = ambient - 1;
    Vec u = seeded_unit_vector(gen, d);
    double angle = ball.radius * (boundary ? 1.0 : std::pow(gen.uniform(), 1.0 / d));
    Vec tangent = frame::tangent_to_ambient(ball.center, u);
    return ball.center * std::cos(angle) + tangent * std::sin(angle);
}

Mat sample_simplex_frame(qcb::Rng& gen, const SimplexRegion& region, int d,
                         bool boundary) {
    const int n = region.n_vertices();
    std::vector<double> lambda(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
        lambda[static_cast<std::size_t>(j)] = -std::log(std::max(gen.uniform(), 1e-300));
        total += lambda[static_cast<std::size_t>(j)];
    }
    if (boundary) {
        std::size_t drop = gen.below(static_cast<std::uint64_t>(n));
        total -= lambda[drop];
        lambda[drop] = 0.0;
    }
    std::vector<double> y(static_cast<std::size_t>(n - 1), 0.0);
    for (int j = 0; j < n; ++j) {
        double w = region.scale() * lambda[static_cast<std::size_t>(j)] / total;
        const auto& vert = region.vertex(j);
        for (int k = 0; k + 1 < n; ++k) y[static_cast<std::size_t>(k)] += w * vert[static_cast<std::size_t>(k)];
    }
    return mat_exp(Traceless(from_algebra_coords(d, y)));
}

Mat sample_size_frame(qcb::Rng& gen, int d, double size_bound, bool boundary) {
    const double floor_size = std::sqrt(static_cast<double>(d));
    double target = boundary
                        ? size_bound
                        : floor_size + (size_bound - floor_size) * gen.uniform();
    Mat u = maps::random_rotation(d, gen.next_u64());
    Mat v = maps::random_rotation(d, gen.next_u64());
    Vec z(d);
    double mean = 0.0;
    for (int i = 0; i < d; ++i) {
        z[i] = gen.normal();
        mean += z[i] / d;
    }
    double zn = 0.0;
    for (int i = 0; i < d; ++i) {
        z[i] -= mean;
        zn += z[i] * z[i];
    }
    if (zn < 1e-12) {
        z = Vec(d);
        z[0] = 1.0;
        z[d - 1] = -1.0;
    }
    auto size_at = [&](double sigma) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += std::exp(2.0 * sigma * z[i]);
        return std::sqrt(s);
    };
    double lo = 0.0, hi = 1.0;
    int guard = 0;
    while (size_at(hi) < target) {
        hi *= 2.0;
        if (++guard > 200) throw CoveringError("frame size target out of reach");
    }
    for (int iter = 0; iter < 200; ++iter) {
        double mid = 0.5 * (lo + hi);
        (size_at(mid) < target ? lo : hi) = mid;
    }
    double sigma = 0.5 * (lo + hi);
    Vec diag(d);
    for (int i = 0; i < d; ++i) diag[i] = std::exp(sigma * z[i]);
    return u * Mat::diagonal(diag) * v.transposed();
}

}  // namespace

CoveringCertificate verify_covering_frames(const GeneratorFamily& family,
                                           const FrameWindow& window,
                                           int n_samples, std::uint64_t seed,
                                           int n_threads) {
    if (family.size() == 0) throw CoveringError("empty generator family");
    if (n_samples < 1) throw CoveringError("sample count must be >= 1");
    const frame::Model model = family.maps.front().model();
    const int d = family.maps.front().manifold_dim();

    auto make_sample = [&](std::size_t i) -> FramePoint {
        qcb::Rng gen(qcb::child_seed(seed, i));
        bool boundary_frame = (i % 8 == 7);
        bool boundary_base = (i % 8 == 3);
        FramePoint w;
        if (auto* simplex = std::get_if<SimplexWindow>(&window)) {
            w.frame = sample_simplex_frame(gen, simplex->region, d, boundary_frame);
            if (model == frame::Model::euclidean) {
                Vec x = seeded_unit_vector(gen, d) * gen.uniform();
                w.base = frame::AmbientPoint{model, x};
            } else {
                w.base = frame::AmbientPoint{model, seeded_unit_vector(gen, d + 1)};
            }
        } else if (auto* size = std::get_if<SizeWindow>(&window)) {
            w.base = frame::AmbientPoint{model, sample_base_point(gen, size->base, boundary_base)};
            w.frame = sample_size_frame(gen, d, size->size_bound, boundary_frame);
        } else {
            const auto& prod = std::get<ProductWindow>(window);
            w.base = frame::AmbientPoint{model, sample_base_point(gen, prod.base, boundary_base)};
            w.frame = sample_simplex_frame(gen, prod.region, d, boundary_frame);
        }
        return w;
    };

    struct SampleResult {
        double margin;
        int witness;
        std::string description;
    };
    auto results = qcb::parallel_map<SampleResult>(
        n_threads, static_cast<std::size_t>(n_samples), [&](std::size_t i) {
            FramePoint w = make_sample(i);
            frame::validate(w);
            double best = -1e300;
            int arg = -1;
            for (int j = 0; j < family.size(); ++j) {
                FramePoint pushed = frame::push_frame(family.maps[static_cast<std::size_t>(j)], w);
                double margin = window_margin(window, pushed);
                if (margin > best) {
                    best = margin;
                    arg = j;
                }
            }
            return SampleResult{best, arg, best > 0.0 ? std::string() : frame::to_json(w)};
        });

    CoveringCertificate cert;
    cert.kind = "frame_covering";
    cert.n_samples = n_samples;
    double worst = 1e300;
    std::size_t worst_index = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        cert.witness_map.push_back(results[i].witness);
        if (results[i].margin < worst) {
            worst = results[i].margin;
            worst_index = i;
        }
    }
    cert.worst_margin = worst;
    cert.lipschitz_slack = 0.0;   // seeded sampling carries no grid structure
    cert.grid_resolution = 0.0;
    cert.passed = worst > 0.0;
    if (!cert.passed) cert.failure_witness = results[worst_index].description;
    return cert;
}

}  // namespace qcb::covering
