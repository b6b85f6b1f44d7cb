#include "qcb/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <vector>

#include "qcb/frame.hpp"
#include "qcb/maps.hpp"
#include "qcb/parallel.hpp"

namespace qcb::sphere {

namespace {

std::string format_double(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

// First d columns of the Householder gauge at unit x; the omitted last
// column is x itself, so these columns span the tangent space exactly.
std::vector<Vec> tangent_columns(const Vec& x) {
    const Mat h = frame::tangent_basis_householder(x);
    const int n = x.dim();
    std::vector<Vec> cols;
    cols.reserve(static_cast<std::size_t>(n - 1));
    for (int j = 0; j < n - 1; ++j) {
        Vec c(n);
        for (int i = 0; i < n; ++i) c[i] = h.at(i, j);
        cols.push_back(c);
    }
    return cols;
}

double angle_between(const Vec& a, const Vec& b) {
    const double na = a.norm(), nb = b.norm();
    const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
    return std::acos(c);
}

// Angle to the nearest of +b and -b.
double axis_angle(const Vec& a, const Vec& b) {
    const double na = a.norm(), nb = b.norm();
    const double c = std::clamp(std::abs(a.dot(b)) / (na * nb), 0.0, 1.0);
    return std::acos(c);
}

void require_unit(const Vec& x, const char* what) {
    if (std::abs(x.norm() - 1.0) > 1e-9)
        throw SphereError(std::string(what) + " is not a unit vector",
                          format_double(x.norm()));
}

// Tangent map of the rotation r as a sphere isometry, from the canonical
// basis at x to the canonical basis at rx.
Mat rotation_tangent(const Mat& r, const Vec& x) {
    Vec rx = r * x;
    rx = rx * (1.0 / rx.norm());
    const auto bx = tangent_columns(x);
    const auto bf = tangent_columns(rx);
    const int d = x.dim() - 1;
    Mat out(d);
    for (int j = 0; j < d; ++j) {
        const Vec img = r * bx[j];
        for (int i = 0; i < d; ++i) out.at(i, j) = bf[i].dot(img);
    }
    return out;
}

void validate_rotations(const std::vector<Mat>& gens, int n) {
    const Mat id = Mat::identity(n);
    for (std::size_t i = 0; i < gens.size(); ++i) {
        if (gens[i].dim() != n)
            throw SphereError("scan: generator dimension mismatch");
        if (linalg::hs_norm(gens[i].transposed() * gens[i] - id) > 1e-9)
            throw SphereError("scan: generator is not orthogonal",
                              "index " + std::to_string(i));
        if (linalg::determinant(gens[i]) < 0.0)
            throw SphereError("scan: generator reverses orientation",
                              "index " + std::to_string(i));
    }
}

// FNV-1a over the quantized ambient coordinates of x and v.  Collisions can
// prune distinct states; the search stays deterministic either way.
std::uint64_t cell_key(const Vec& x, const Vec& v, double x_cell,
                       double v_cell) {
    std::uint64_t h = 1469598103934665603ull;
    auto fold = [&h](long q) {
        auto u = static_cast<std::uint64_t>(q);
        for (int b = 0; b < 8; ++b) {
            h ^= (u >> (8 * b)) & 0xffull;
            h *= 1099511628211ull;
        }
    };
    for (int i = 0; i < x.dim(); ++i) fold(std::lround(x[i] / x_cell));
    for (int i = 0; i < v.dim(); ++i) fold(std::lround(v[i] / v_cell));
    return h;
}

int permutation_sign(const std::vector<int>& p) {
    int inversions = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = i + 1; j < p.size(); ++j)
            if (p[i] > p[j]) ++inversions;
    return inversions % 2 == 0 ? 1 : -1;
}

// The map x -> (eps_1 x_{p(1)}, ..., eps_n x_{p(n)}) with all signs +1
// except, for odd permutations, a -1 on the last moved coordinate; the
// result always has determinant +1.  Conjugating a diagonal matrix by it
// permutes the diagonal entries and the signs drop out.
Mat signed_permutation(const std::vector<int>& p) {
    const int n = static_cast<int>(p.size());
    int last_moved = -1;
    for (int i = 0; i < n; ++i)
        if (p[static_cast<std::size_t>(i)] != i) last_moved = i;
    const bool odd = permutation_sign(p) < 0;
    Mat r(n);
    for (int i = 0; i < n; ++i) {
        const double eps = odd && i == last_moved ? -1.0 : 1.0;
        r.at(i, p[static_cast<std::size_t>(i)]) = eps;
    }
    return r;
}

long factorial(int k) {
    long f = 1;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

// Expansion and contraction margins of g = f_{a_hat} composed with the
// rotation r at the tangent sample (x, v).  Positive values mean the
// derivative co_norm exceeds 1 and the normalized derivative contracts the
// orthocomplement of v.
struct DirectionalMargins {
    double expansion = 0.0;
    double contraction = 0.0;
};

DirectionalMargins directional_margins(const ProjectiveMap& a_hat,
                                       const Mat& r, const Vec& x,
                                       const Vec& v) {
    Vec rx = r * x;
    rx = rx * (1.0 / rx.norm());
    const Mat t = sphere_derivative(a_hat, rx) * rotation_tangent(r, x);
    DirectionalMargins m;
    m.expansion = linalg::co_norm(t) - 1.0;
    const Vec u = frame::ambient_to_tangent(x, v);
    m.contraction = 1.0 - covering::restricted_norm(linalg::normalized(t), u);
    return m;
}

Mat compose_word(const std::vector<Mat>& gens, const std::vector<int>& word,
                 int n) {
    Mat r = Mat::identity(n);
    for (int idx : word) r = gens[static_cast<std::size_t>(idx)] * r;
    return r;
}

// Orthonormal completion of v inside the tangent space at x, seeded from
// the given ambient directions.  With seeds fixed per sample cell the
// result varies continuously over the cell, which keeps the measured
// neighbour slack a genuine local rate.
std::vector<Vec> tangent_perp_basis(const Vec& x, const Vec& v,
                                    const std::vector<Vec>& seeds, int want) {
    std::vector<Vec> out;
    if (want == 0) return out;
    for (const Vec& c : seeds) {
        Vec w = c - x * c.dot(x);
        w = w - v * w.dot(v);
        for (const Vec& p : out) w = w - p * w.dot(p);
        const double nw = w.norm();
        if (nw > 1e-6) {
            out.push_back(w * (1.0 / nw));
            if (static_cast<int>(out.size()) == want) return out;
        }
    }
    throw SphereError("certificate: degenerate tangent frame");
}

}  // namespace

ProjectiveMap::ProjectiveMap(Mat matrix) : matrix_(matrix) {
    if (matrix_.dim() < 2)
        throw SphereError("projective map: ambient dimension below 2");
    const double det = linalg::determinant(matrix_);
    if (std::abs(det - 1.0) > linalg::tol::special_linear)
        throw SphereError("projective map: determinant is not 1",
                          format_double(det));
}

Vec sphere_map(const ProjectiveMap& a, const Vec& x) {
    if (x.dim() != a.ambient_dim())
        throw SphereError("sphere map: dimension mismatch");
    require_unit(x, "sphere map: base point");
    const Vec y = a.matrix() * x;
    const double nrm = y.norm();
    if (nrm == 0.0) throw SphereError("sphere map: image vanished");
    return y * (1.0 / nrm);
}

Mat sphere_derivative(const ProjectiveMap& a, const Vec& x) {
    if (x.dim() != a.ambient_dim())
        throw SphereError("sphere derivative: dimension mismatch");
    require_unit(x, "sphere derivative: base point");
    const Vec ax = a.matrix() * x;
    const double nrm = ax.norm();
    if (nrm == 0.0) throw SphereError("sphere derivative: image vanished");
    const Vec fx = ax * (1.0 / nrm);
    const auto bx = tangent_columns(x);
    // The image basis columns are orthogonal to fx, so the projection
    // I - fx fx^T is absorbed by reading coefficients in that basis.
    const auto bf = tangent_columns(fx);
    const int d = x.dim() - 1;
    Mat out(d);
    for (int j = 0; j < d; ++j) {
        const Vec img = a.matrix() * bx[j];
        for (int i = 0; i < d; ++i) out.at(i, j) = bf[i].dot(img) / nrm;
    }
    return out;
}

bool check_diagonal_condition(const std::vector<double>& r) {
    const int n = static_cast<int>(r.size());
    if (n < 2)
        throw SphereError("diagonal condition: need at least two entries");
    for (double e : r)
        if (!(e > 0.0))
            throw SphereError("diagonal condition: nonpositive entry",
                              format_double(e));
    const int d = n - 1;
    double smallest = r[0];
    double product = r[0];
    for (int i = 1; i < d; ++i) {
        smallest = std::min(smallest, r[static_cast<std::size_t>(i)]);
        product *= r[static_cast<std::size_t>(i)];
    }
    if (!(r[static_cast<std::size_t>(d)] < smallest)) return false;
    for (int i = 1; i < d; ++i)
        if (!(std::pow(r[static_cast<std::size_t>(i)], d) < product))
            return false;
    return true;
}

Mat NormalFormWord::reconstruct(const Mat& d) const {
    if (rotations.size() != exponents.size() + 1)
        throw SphereError("normal form word: rotation count is off");
    const Mat dinv = linalg::inverse(d);
    Mat acc = rotations.front();
    for (std::size_t i = 0; i < exponents.size(); ++i) {
        acc = acc * (exponents[i] > 0 ? d : dinv);
        acc = acc * rotations[i + 1];
    }
    return acc;
}

NormalFormWord normal_form(const Mat& d_input, double tol) {
    const int n = d_input.dim();
    const double det = linalg::determinant(d_input);
    if (std::abs(det - 1.0) > linalg::tol::special_linear)
        throw SphereError("normal form: input is not special-linear",
                          format_double(det));
    const double kappa = linalg::conformality(d_input);
    if (kappa <= 1.0 + tol)
        throw SphereError("normal form: orthogonal input",
                          "kappa = " + format_double(kappa));

    // D = u diag(s) v^T with both factors special orthogonal.  The singular
    // values are positive and already descending, so the sorting
    // conjugation of the construction is the identity here.
    auto sv = linalg::svd(d_input);
    Mat u = sv.u;
    Mat v = sv.v;
    if (linalg::determinant(u) < 0.0) {
        for (int i = 0; i < n; ++i) {
            u.at(i, n - 1) = -u.at(i, n - 1);
            v.at(i, n - 1) = -v.at(i, n - 1);
        }
    }
    const double s1 = sv.s[0];
    const Mat ut = u.transposed();
    const Mat vt = v.transposed();

    // Permutations fixing the first index, in pinned lexicographic order.
    std::vector<std::vector<int>> sigmas;
    std::vector<int> tail(static_cast<std::size_t>(n - 1));
    std::iota(tail.begin(), tail.end(), 1);
    do {
        std::vector<int> p;
        p.reserve(static_cast<std::size_t>(n));
        p.push_back(0);
        p.insert(p.end(), tail.begin(), tail.end());
        sigmas.push_back(std::move(p));
    } while (std::next_permutation(tail.begin(), tail.end()));

    NormalFormWord word;
    Mat pending = Mat::identity(n);
    auto emit = [&word, &pending](const Mat& prefix, int exp,
                                  const Mat& suffix) {
        word.rotations.push_back(pending * prefix);
        word.exponents.push_back(exp);
        pending = suffix;
    };

    // D1 = prod_sigma R_sigma S R_sigma^T with S = u^T D v.  The inverse
    // pass walks the factors backwards with S^{-1} = v^T D^{-1} u.
    auto emit_d1 = [&](bool inverse) {
        const int m = static_cast<int>(sigmas.size());
        for (int k = 0; k < m; ++k) {
            const auto& p = sigmas[static_cast<std::size_t>(inverse ? m - 1 - k : k)];
            const Mat rs = signed_permutation(p);
            if (inverse)
                emit(rs * vt, -1, u * rs.transposed());
            else
                emit(rs * ut, +1, v * rs.transposed());
        }
    };

    std::vector<int> reversed(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        reversed[static_cast<std::size_t>(i)] = n - 1 - i;
    const Mat r_rev = signed_permutation(reversed);

    for (int rep = 0; rep < 2; ++rep) {
        emit_d1(false);
        pending = pending * r_rev;
        emit_d1(true);
        pending = pending * r_rev.transposed();
    }
    word.rotations.push_back(pending);

    // D1 = diag(s1^{d!}, s1^{-(d-1)!}, ...), so the commutator squared is
    // diag(s1^{2K}, 1, ..., 1, s1^{-2K}) with K = d! + (d-1)!.
    const long k_exp = factorial(n - 1) + factorial(n - 2);
    Vec rdiag(n);
    rdiag[0] = std::pow(s1, 2.0 * static_cast<double>(k_exp));
    for (int i = 1; i < n - 1; ++i) rdiag[i] = 1.0;
    rdiag[n - 1] = std::pow(s1, -2.0 * static_cast<double>(k_exp));
    word.result = Mat::diagonal(rdiag);

    const Mat recon = word.reconstruct(d_input);
    const double residual = linalg::hs_norm(recon - word.result) /
                            (linalg::hs_norm(word.result) + 1.0);
    if (residual > 1e-8)
        throw SphereError("normal form: reconstruction drifted",
                          "residual = " + format_double(residual));
    std::vector<double> entries(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) entries[static_cast<std::size_t>(i)] = rdiag[i];
    if (!check_diagonal_condition(entries))
        throw SphereError("normal form: output fails the diagonal condition");
    return word;
}

TangentGrid build_tangent_grid(int d, int n_base, int n_angles) {
    if (d < 1 || d + 1 > linalg::kMaxDim)
        throw SphereError("tangent grid: dimension out of range");
    if (n_base < 1 || n_angles < 1)
        throw SphereError("tangent grid: empty grid");
    if (d == 1 && n_angles > 2)
        throw SphereError("tangent grid: the circle has two unit tangents");

    TangentGrid grid;
    grid.d = d;
    const auto bases = maps::direction_set(d + 1, n_base, 0);

    // Tangent directions in canonical coordinates, shared by every base.
    std::vector<Vec> tdirs;
    if (d == 1) {
        for (int k = 0; k < n_angles; ++k) {
            Vec t(1);
            t[0] = k == 0 ? 1.0 : -1.0;
            tdirs.push_back(t);
        }
    } else {
        tdirs = maps::direction_set(d, n_angles, 0);
    }

    grid.samples.reserve(bases.size() * tdirs.size());
    for (const Vec& x : bases) {
        const auto cols = tangent_columns(x);
        for (const Vec& t : tdirs) {
            Vec v(d + 1);
            for (int j = 0; j < d; ++j) v += cols[static_cast<std::size_t>(j)] * t[j];
            grid.samples.push_back({x, v * (1.0 / v.norm())});
        }
    }

    auto largest_gap = [](const std::vector<Vec>& pts) {
        if (pts.size() < 2) return 3.14159265358979323846;
        double worst = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double nearest = 10.0;
            for (std::size_t j = 0; j < pts.size(); ++j)
                if (j != i) nearest = std::min(nearest, angle_between(pts[i], pts[j]));
            worst = std::max(worst, nearest);
        }
        return worst;
    };
    grid.x_spacing = largest_gap(bases);
    grid.v_spacing = d == 1 ? 0.0 : largest_gap(tdirs);
    return grid;
}

ScanReport directional_contraction_scan(const std::vector<Mat>& rot_generators,
                                        const ProjectiveMap& a_hat,
                                        const TangentGrid& grid,
                                        int max_word_len, double epsilon_cone,
                                        int n_threads) {
    const int n = a_hat.ambient_dim();
    const int d = n - 1;
    if (grid.d != d) throw SphereError("scan: grid dimension mismatch");
    if (max_word_len < 0) throw SphereError("scan: negative word length");
    if (!(epsilon_cone > 0.0))
        throw SphereError("scan: nonpositive cone angle");
    validate_rotations(rot_generators, n);

    std::vector<double> diag(static_cast<std::size_t>(n));
    double off = 0.0;
    for (int i = 0; i < n; ++i) {
        diag[static_cast<std::size_t>(i)] = a_hat.matrix().at(i, i);
        for (int j = 0; j < n; ++j)
            if (i != j) off = std::max(off, std::abs(a_hat.matrix().at(i, j)));
    }
    if (off > 1e-12)
        throw SphereError("scan: expanding map is not diagonal",
                          format_double(off));
    if (!check_diagonal_condition(diag))
        throw SphereError(
            "scan: expanding map fails the diagonal condition");

    for (const auto& s : grid.samples) {
        require_unit(s.x, "scan: sample base");
        require_unit(s.v, "scan: sample tangent");
        if (std::abs(s.x.dot(s.v)) > 1e-9)
            throw SphereError("scan: sample tangent is not orthogonal");
    }

    const Vec pole = Vec::unit(n, n - 1);
    const Vec e1 = Vec::unit(n, 0);
    const double x_cell = target_angle / 2.0;
    const double v_cell = epsilon_cone / 2.0;
    constexpr std::size_t kStateBudget = 200000;

    auto outcomes = parallel_map<SampleOutcome>(
        n_threads, grid.samples.size(), [&](std::size_t si) {
            const ScanSample& start = grid.samples[si];
            SampleOutcome out;

            std::vector<Vec> xs, vs;
            std::vector<int> parent, via, depth;
            std::unordered_set<std::uint64_t> seen;
            xs.push_back(start.x);
            vs.push_back(start.v);
            parent.push_back(-1);
            via.push_back(-1);
            depth.push_back(0);
            seen.insert(cell_key(start.x, start.v, x_cell, v_cell));

            auto word_of = [&](std::size_t state) {
                std::vector<int> word;
                for (int s = static_cast<int>(state); parent[static_cast<std::size_t>(s)] >= 0;
                     s = parent[static_cast<std::size_t>(s)])
                    word.push_back(via[static_cast<std::size_t>(s)]);
                std::reverse(word.begin(), word.end());
                return word;
            };

            // Exact acceptance: recompose the word and re-check the gates,
            // then require strictly positive margins.
            auto accept = [&](std::size_t state) {
                const auto word = word_of(state);
                const Mat r = compose_word(rot_generators, word, n);
                Vec rx = r * start.x;
                rx = rx * (1.0 / rx.norm());
                Vec rv = r * start.v;
                rv = rv - rx * rv.dot(rx);
                rv = rv * (1.0 / rv.norm());
                if (angle_between(rx, pole) >= target_angle) return false;
                if (axis_angle(rv, e1) >= epsilon_cone) return false;
                const auto m = directional_margins(a_hat, r, start.x, start.v);
                if (!(m.expansion > 0.0) || !(m.contraction > 0.0))
                    return false;
                out.covered = true;
                out.word = word;
                out.expansion_margin = m.expansion;
                out.contraction_margin = m.contraction;
                return true;
            };

            for (std::size_t head = 0; head < xs.size(); ++head) {
                if (angle_between(xs[head], pole) < target_angle &&
                    axis_angle(vs[head], e1) < epsilon_cone && accept(head))
                    break;
                if (depth[head] >= max_word_len) continue;
                for (std::size_t gi = 0; gi < rot_generators.size(); ++gi) {
                    if (xs.size() >= kStateBudget) break;
                    Vec x = rot_generators[gi] * xs[head];
                    x = x * (1.0 / x.norm());
                    Vec v = rot_generators[gi] * vs[head];
                    v = v - x * v.dot(x);
                    v = v * (1.0 / v.norm());
                    const std::uint64_t key = cell_key(x, v, x_cell, v_cell);
                    if (!seen.insert(key).second) continue;
                    xs.push_back(x);
                    vs.push_back(v);
                    parent.push_back(static_cast<int>(head));
                    via.push_back(static_cast<int>(gi));
                    depth.push_back(depth[head] + 1);
                }
            }
            return out;
        });

    ScanReport report;
    report.n_samples = static_cast<int>(outcomes.size());
    report.word_lengths.assign(static_cast<std::size_t>(max_word_len) + 1, 0);
    report.samples = std::move(outcomes);
    bool first = true;
    for (const auto& s : report.samples) {
        if (!s.covered) continue;
        ++report.n_covered;
        ++report.word_lengths[s.word.size()];
        if (first) {
            report.worst_expansion = s.expansion_margin;
            report.worst_contraction = s.contraction_margin;
            first = false;
        } else {
            report.worst_expansion =
                std::min(report.worst_expansion, s.expansion_margin);
            report.worst_contraction =
                std::min(report.worst_contraction, s.contraction_margin);
        }
    }
    report.coverage = report.n_samples == 0
                          ? 0.0
                          : static_cast<double>(report.n_covered) /
                                static_cast<double>(report.n_samples);
    return report;
}

covering::CoveringCertificate certify_directional_contraction(
    const ScanReport& scan, const std::vector<Mat>& rot_generators,
    const ProjectiveMap& a_hat, const TangentGrid& grid, int refinement,
    int n_threads) {
    const int n = a_hat.ambient_dim();
    const int d = n - 1;
    if (grid.d != d)
        throw SphereError("certificate: grid dimension mismatch");
    if (scan.n_samples != static_cast<int>(grid.samples.size()) ||
        scan.samples.size() != grid.samples.size())
        throw SphereError("certificate: scan and grid sizes disagree");
    if (scan.n_covered != scan.n_samples)
        throw SphereError("certificate: scan coverage below one");
    if (refinement < 1)
        throw SphereError("certificate: refinement below one");
    validate_rotations(rot_generators, n);

    // Axes of one sample cell: d base directions plus d - 1 tangent
    // directions (none on the circle, where the unit tangents are
    // isolated).
    const int base_axes = d;
    const int v_axes = grid.v_spacing > 0.0 ? d - 1 : 0;
    const int axes = base_axes + v_axes;
    std::size_t per_sample = 1;
    for (int a = 0; a < axes; ++a)
        per_sample *= static_cast<std::size_t>(refinement);

    std::vector<double> step(static_cast<std::size_t>(axes));
    for (int a = 0; a < axes; ++a)
        step[static_cast<std::size_t>(a)] =
            (a < base_axes ? grid.x_spacing : grid.v_spacing) / refinement;

    // The two inequalities are certified as separate channels, each against
    // its own measured variation.  The expansion margin moves at the scale
    // of the derivative norms while the contraction margin is much flatter,
    // so a shared slack would drown the smaller channel.  Refined points sit
    // at sub-cell centres, so every point of the cell is within half a step
    // per axis of a measured one; the slack is the matching first-order
    // bound, summed over axes with each axis at its own rate.
    struct CellResult {
        double worst_exp = 0.0;
        double worst_con = 0.0;
        double slack_exp = 0.0;
        double slack_con = 0.0;
        std::string note;
    };

    auto cells = parallel_map<CellResult>(
        n_threads, grid.samples.size(), [&](std::size_t si) {
            const ScanSample& s = grid.samples[si];
            const Mat r = compose_word(rot_generators,
                                       scan.samples[si].word, n);
            const auto base_cols = tangent_columns(s.x);
            // Tangent-swing directions are selected once at the cell centre
            // and re-orthogonalized at every refined point, so they vary
            // continuously over the cell.
            const auto swing_seeds =
                v_axes > 0 ? tangent_perp_basis(s.x, s.v, base_cols, v_axes)
                           : std::vector<Vec>{};

            std::vector<double> exps(per_sample), cons(per_sample);
            std::vector<int> idx(static_cast<std::size_t>(axes), 0);
            for (std::size_t flat = 0; flat < per_sample; ++flat) {
                auto offset = [&](int a) {
                    return ((idx[static_cast<std::size_t>(a)] + 0.5) / refinement - 0.5) *
                           step[static_cast<std::size_t>(a)] * refinement;
                };
                // Geodesic move of the base inside its cell.
                Vec w(n);
                for (int a = 0; a < base_axes; ++a)
                    w += base_cols[static_cast<std::size_t>(a)] * offset(a);
                const double wn = w.norm();
                Vec x = wn == 0.0
                            ? s.x
                            : s.x * std::cos(wn) + w * (std::sin(wn) / wn);
                x = x * (1.0 / x.norm());
                // Transport the tangent direction and swing it inside the
                // tangent cell.
                Vec v0 = s.v - x * s.v.dot(x);
                v0 = v0 * (1.0 / v0.norm());
                Vec v = v0;
                if (v_axes > 0) {
                    const auto perp =
                        tangent_perp_basis(x, v0, swing_seeds, v_axes);
                    Vec beta(n);
                    for (int a = 0; a < v_axes; ++a)
                        beta += perp[static_cast<std::size_t>(a)] * offset(base_axes + a);
                    const double bn = beta.norm();
                    if (bn > 0.0)
                        v = v0 * std::cos(bn) + beta * (std::sin(bn) / bn);
                    v = v * (1.0 / v.norm());
                }
                const auto m = directional_margins(a_hat, r, x, v);
                exps[flat] = m.expansion;
                cons[flat] = m.contraction;

                for (int a = axes - 1; a >= 0; --a) {
                    if (++idx[static_cast<std::size_t>(a)] < refinement) break;
                    idx[static_cast<std::size_t>(a)] = 0;
                }
            }

            CellResult cell;
            cell.worst_exp = *std::min_element(exps.begin(), exps.end());
            cell.worst_con = *std::min_element(cons.begin(), cons.end());
            std::size_t stride = 1;
            for (int a = axes - 1; a >= 0; --a) {
                double jump_exp = 0.0, jump_con = 0.0;
                for (std::size_t flat = 0; flat < per_sample; ++flat) {
                    const std::size_t along =
                        (flat / stride) % static_cast<std::size_t>(refinement);
                    if (along + 1 >= static_cast<std::size_t>(refinement)) continue;
                    jump_exp = std::max(
                        jump_exp, std::abs(exps[flat + stride] - exps[flat]));
                    jump_con = std::max(
                        jump_con, std::abs(cons[flat + stride] - cons[flat]));
                }
                cell.slack_exp += jump_exp / 2.0;
                cell.slack_con += jump_con / 2.0;
                stride *= static_cast<std::size_t>(refinement);
            }
            if (cell.worst_exp <= 0.0 || cell.worst_con <= 0.0)
                cell.note = "sample " + std::to_string(si) +
                            " has margins (" + format_double(cell.worst_exp) +
                            ", " + format_double(cell.worst_con) +
                            ") after refinement";
            return cell;
        });

    covering::CoveringCertificate cert;
    cert.kind = "directional-contraction";
    cert.n_samples = static_cast<int>(grid.samples.size() * per_sample);
    // Covering radius of the refined grid along its coarsest axis.
    cert.grid_resolution =
        *std::max_element(step.begin(), step.end()) / 2.0;
    // Every sample must dominate its own slack in both channels.  The
    // stored margin and slack come from the sample and channel with the
    // least headroom, so the pass test on the stored pair decides all of
    // them.
    double binding_head = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        cert.witness_map.push_back(
            static_cast<int>(scan.samples[i].word.size()));
        if (cert.failure_witness.empty() && !cells[i].note.empty())
            cert.failure_witness = cells[i].note;
        const double head_exp = cells[i].worst_exp - cells[i].slack_exp;
        const double head_con = cells[i].worst_con - cells[i].slack_con;
        const bool exp_binds = head_exp <= head_con;
        const double head = exp_binds ? head_exp : head_con;
        if (first || head < binding_head) {
            binding_head = head;
            cert.worst_margin =
                exp_binds ? cells[i].worst_exp : cells[i].worst_con;
            cert.lipschitz_slack =
                (exp_binds ? cells[i].slack_exp : cells[i].slack_con) /
                cert.grid_resolution;
        }
        first = false;
    }
    cert.passed =
        cert.worst_margin > cert.lipschitz_slack * cert.grid_resolution;
    if (cert.passed) cert.failure_witness.clear();
    if (!cert.passed && cert.failure_witness.empty())
        cert.failure_witness = "binding margin " +
                               format_double(cert.worst_margin) +
                               " does not dominate its neighbour slack " +
                               format_double(cert.lipschitz_slack *
                                             cert.grid_resolution);
    return cert;
}

}  // namespace qcb::sphere
