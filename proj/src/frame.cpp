#include "qcb/frame.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "qcb/maps.hpp"

namespace qcb::frame {

double frame_size(const FramePoint& w) { return linalg::hs_norm(w.frame); }

void validate(const FramePoint& w) {
    const double det = linalg::determinant(w.frame);
    if (std::abs(std::abs(det) - 1.0) > tol::frame_det)
        throw linalg::KernelError("frame point: |det frame| deviates from 1 by " +
                                  std::to_string(std::abs(std::abs(det) - 1.0)));
    if (w.base.model == Model::sphere) {
        if (std::abs(w.base.coords.norm() - 1.0) > tol::sphere_unit)
            throw linalg::KernelError("frame point: sphere base is not unit");
    }
    if (w.frame.dim() != w.base.manifold_dim())
        throw linalg::KernelError("frame point: frame dimension mismatch");
}

Mat tangent_basis_householder(const Vec& x) {
    const int n = x.dim();
    Vec pole = Vec::unit(n, n - 1);

    // Antipodal branch: reflect -e_n onto x, then flip the first basis
    // vector.  Everywhere else reflect e_n onto x.
    bool antipodal = (x + pole).norm() <= tol::antipodal;
    if (antipodal) pole = pole * -1.0;

    const Vec u = x - pole;
    const double uu = u.dot(u);
    Mat h = Mat::identity(n);
    if (uu > 0.0) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) h.at(i, j) -= 2.0 * u[i] * u[j] / uu;
    }
    if (antipodal) {
        for (int i = 0; i < n; ++i) h.at(i, 0) = -h.at(i, 0);
    }
    return h;
}

Vec ambient_to_tangent(const Vec& x, const Vec& ambient) {
    const Mat h = tangent_basis_householder(x);
    const int d = x.dim() - 1;
    Vec t(d);
    for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int i = 0; i < x.dim(); ++i) s += h.at(i, j) * ambient[i];
        t[j] = s;
    }
    return t;
}

Vec tangent_to_ambient(const Vec& x, const Vec& tangent_coords) {
    const Mat h = tangent_basis_householder(x);
    Vec a(x.dim());
    for (int i = 0; i < x.dim(); ++i) {
        double s = 0.0;
        for (int j = 0; j < tangent_coords.dim(); ++j)
            s += h.at(i, j) * tangent_coords[j];
        a[i] = s;
    }
    return a;
}

FramePoint push_frame(const maps::LocalMap& f, const FramePoint& w) {
    validate(w);
    const Mat dhat = f.normalized_tangent_derivative(w.base.coords);
    FramePoint out;
    out.base.model = w.base.model;
    out.base.coords = f.apply(w.base.coords);
    out.frame = dhat * w.frame;
    return out;
}

namespace {

nlohmann::json number(double v) { return nlohmann::json(v); }

}  // namespace

std::string to_json(const FramePoint& w) {
    nlohmann::json j;
    j["model"] = w.base.model == Model::euclidean ? "euclidean" : "sphere";
    nlohmann::json base = nlohmann::json::array();
    for (int i = 0; i < w.base.coords.dim(); ++i)
        base.push_back(number(w.base.coords[i]));
    j["base"] = base;
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < w.frame.dim(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int k = 0; k < w.frame.dim(); ++k) row.push_back(number(w.frame.at(i, k)));
        rows.push_back(row);
    }
    j["frame"] = rows;
    return j.dump();
}

FramePoint frame_point_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    FramePoint w;
    const std::string model = j.at("model").get<std::string>();
    if (model == "euclidean")
        w.base.model = Model::euclidean;
    else if (model == "sphere")
        w.base.model = Model::sphere;
    else
        throw linalg::KernelError("frame point: unknown model tag '" + model + "'");

    const auto& base = j.at("base");
    w.base.coords = Vec(static_cast<int>(base.size()));
    for (int i = 0; i < w.base.coords.dim(); ++i)
        w.base.coords[i] = base.at(static_cast<std::size_t>(i)).get<double>();

    const auto& rows = j.at("frame");
    w.frame = Mat(static_cast<int>(rows.size()));
    for (int i = 0; i < w.frame.dim(); ++i)
        for (int k = 0; k < w.frame.dim(); ++k)
            w.frame.at(i, k) = rows.at(static_cast<std::size_t>(i))
                                   .at(static_cast<std::size_t>(k))
                                   .get<double>();
    validate(w);
    return w;
}

}  // namespace qcb::frame
