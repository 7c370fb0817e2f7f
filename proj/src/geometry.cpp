#include "lgv/geometry.hpp"

#include "lgv/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace lgv {

Eigen::Matrix3d make_transform(double x, double y, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix3d m;
  m << c, s, x, -s, c, y, 0, 0, 1;
  return m;
}

Eigen::Matrix3d invert_transform(double x, double y, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix3d m;
  m << c, -s, -(c * x - s * y), s, c, -(s * x + c * y), 0, 0, 1;
  return m;
}

namespace {

struct Bilinear {
  Eigen::Index r0, c0;
  double wy, wx;
};

// Source pixel location of normalized (xs, ys).
inline Bilinear locate(double xs, double ys, Eigen::Index h, Eigen::Index w) {
  const double colf = (xs + 1.0) * 0.5 * static_cast<double>(w - 1);
  const double rowf = (1.0 - ys) * 0.5 * static_cast<double>(h - 1);
  const double c0 = std::floor(colf), r0 = std::floor(rowf);
  return {static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(c0), rowf - r0, colf - c0};
}

inline double pixel(const double* img, Eigen::Index r, Eigen::Index c, Eigen::Index h, Eigen::Index w) {
  return (r < 0 || c < 0 || r >= h || c >= w) ? 0.0 : img[r * w + c];
}

inline double norm_x(Eigen::Index c, Eigen::Index w) { return -1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(w - 1); }
inline double norm_y(Eigen::Index r, Eigen::Index h) { return 1.0 - 2.0 * static_cast<double>(r) / static_cast<double>(h - 1); }

void sample_row(const double* img, const double* a, double* out, Eigen::Index h, Eigen::Index w) {
  for (Eigen::Index r = 0; r < h; ++r) {
    const double yp = norm_y(r, h);
    for (Eigen::Index c = 0; c < w; ++c) {
      const double xp = norm_x(c, w);
      const auto b = locate(a[0] * xp + a[1] * yp + a[2], a[3] * xp + a[4] * yp + a[5], h, w);
      const double v00 = pixel(img, b.r0, b.c0, h, w), v01 = pixel(img, b.r0, b.c0 + 1, h, w);
      const double v10 = pixel(img, b.r0 + 1, b.c0, h, w), v11 = pixel(img, b.r0 + 1, b.c0 + 1, h, w);
      out[r * w + c] = (1 - b.wy) * ((1 - b.wx) * v00 + b.wx * v01) + b.wy * ((1 - b.wx) * v10 + b.wx * v11);
    }
  }
}

}  // namespace

Image sample_image(const Image& img, const Eigen::Matrix3d& transform) {
  if (img.rows() < 2 || img.cols() < 2) throw std::invalid_argument("sample_image needs H, W >= 2");
  const double a[6] = {transform(0, 0), transform(0, 1), transform(0, 2),
                       transform(1, 0), transform(1, 1), transform(1, 2)};
  Image out(img.rows(), img.cols());
  sample_row(img.data(), a, out.data(), img.rows(), img.cols());
  return out;
}

Image sample_image(const Image& img, const PlanarTransform& t) { return sample_image(img, make_transform(t)); }

namespace {

double eval_terms(const SystemSpec& spec, const std::vector<FrameTerm>& terms,
                  const std::vector<std::optional<double>>& q, const std::vector<double>& c) {
  double v = 0.0;
  for (const auto& t : terms) {
    const auto& qi = q.at(static_cast<std::size_t>(t.coord));
    if (!qi) {
      throw OrderingError("frame depends on coordinate '" + spec.coordinates[static_cast<std::size_t>(t.coord)].name +
                          "' which has not been encoded yet");
    }
    double f = *qi;
    if (t.fn == FrameFn::Sin) f = std::sin(f);
    if (t.fn == FrameFn::Cos) f = std::cos(f);
    const double len = t.length >= 0 ? c.at(static_cast<std::size_t>(t.length)) : 1.0;
    v += t.coefficient * len * f;
  }
  return v;
}

PlanarTransform eval_rule(const SystemSpec& spec, const FrameRule& rule, const std::vector<std::optional<double>>& q,
                          const std::vector<double>& c) {
  PlanarTransform t{eval_terms(spec, rule.x, q, c), eval_terms(spec, rule.y, q, c), 0.0};
  if (rule.rotation_coord >= 0) {
    const auto& qi = q.at(static_cast<std::size_t>(rule.rotation_coord));
    if (!qi) throw OrderingError("frame rotation depends on a coordinate that has not been encoded yet");
    t.theta = *qi;
  }
  return t;
}

}  // namespace

PlanarTransform enc_frame(const SystemSpec& spec, int j, const std::vector<std::optional<double>>& q,
                          const std::vector<double>& c) {
  if (j < 0 || j >= spec.dof()) throw std::out_of_range("enc_frame: coordinate index out of range");
  if (static_cast<int>(q.size()) != spec.dof()) throw std::invalid_argument("enc_frame: q must have dof entries");
  return eval_rule(spec, spec.encoder_frames[static_cast<std::size_t>(j)], q, c);
}

PlanarTransform dec_frame(const SystemSpec& spec, int i, const Eigen::VectorXd& q, const std::vector<double>& c) {
  if (i < 0 || i >= spec.n_bodies) throw std::out_of_range("dec_frame: body index out of range");
  if (q.size() != spec.dof()) throw std::invalid_argument("dec_frame: q must have dof entries");
  std::vector<std::optional<double>> full(q.data(), q.data() + q.size());
  return eval_rule(spec, spec.decoder_frames[static_cast<std::size_t>(i)], full, c);
}

namespace ad {

Var grid_sample(Var images, Var affine, int height, int width) {
  const Matrix& img = images.value();
  const Matrix& aff = affine.value();
  const Index hw = static_cast<Index>(height) * width;
  if (img.cols() != hw || aff.cols() != 6 || (img.rows() != 1 && img.rows() != aff.rows())) {
    throw std::invalid_argument("grid_sample: expected images [1|B x H*W] and affine [B x 6]");
  }
  const Index batch = aff.rows();
  const bool shared = img.rows() == 1;
  Matrix out(batch, hw);
  for (Index b = 0; b < batch; ++b) {
    sample_row(img.row(shared ? 0 : b).data(), aff.row(b).data(), out.row(b).data(), height, width);
  }
  return images.tape().record(std::move(out), {images, affine}, [images, affine, height, width, shared, batch](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& img = images.value();
    const Matrix& aff = affine.value();
    const bool want_img = images.requires_grad();
    const bool want_aff = affine.requires_grad();
    Matrix gimg = want_img ? Matrix::Zero(img.rows(), img.cols()) : Matrix();
    Matrix gaff = want_aff ? Matrix::Zero(batch, 6) : Matrix();
    const double sx = 0.5 * (width - 1);
    const double sy = -0.5 * (height - 1);
    for (Index b = 0; b < batch; ++b) {
      const Index src = shared ? 0 : b;
      const double* im = img.row(src).data();
      const double* a = aff.row(b).data();
      for (Index r = 0; r < height; ++r) {
        const double yp = norm_y(r, height);
        for (Index c = 0; c < width; ++c) {
          const double go = g(b, r * width + c);
          if (go == 0.0) continue;
          const double xp = norm_x(c, width);
          const auto l = locate(a[0] * xp + a[1] * yp + a[2], a[3] * xp + a[4] * yp + a[5], height, width);
          if (want_img) {
            auto add = [&](Index rr, Index cc, double wgt) {
              if (rr >= 0 && cc >= 0 && rr < height && cc < width) gimg(src, rr * width + cc) += go * wgt;
            };
            add(l.r0, l.c0, (1 - l.wy) * (1 - l.wx));
            add(l.r0, l.c0 + 1, (1 - l.wy) * l.wx);
            add(l.r0 + 1, l.c0, l.wy * (1 - l.wx));
            add(l.r0 + 1, l.c0 + 1, l.wy * l.wx);
          }
          if (want_aff) {
            const double v00 = pixel(im, l.r0, l.c0, height, width), v01 = pixel(im, l.r0, l.c0 + 1, height, width);
            const double v10 = pixel(im, l.r0 + 1, l.c0, height, width);
            const double v11 = pixel(im, l.r0 + 1, l.c0 + 1, height, width);
            const double dcol = (1 - l.wy) * (v01 - v00) + l.wy * (v11 - v10);
            const double drow = (1 - l.wx) * (v10 - v00) + l.wx * (v11 - v01);
            const double gx = go * dcol * sx;
            const double gy = go * drow * sy;
            gaff(b, 0) += gx * xp;
            gaff(b, 1) += gx * yp;
            gaff(b, 2) += gx;
            gaff(b, 3) += gy * xp;
            gaff(b, 4) += gy * yp;
            gaff(b, 5) += gy;
          }
        }
      }
    }
    if (want_img) t.accumulate(images, gimg);
    if (want_aff) t.accumulate(affine, gaff);
  });
}

namespace {

Var eval_terms(Tape& tape, const std::vector<FrameTerm>& terms, const std::vector<Var>& coords,
               const std::vector<Var>& lengths, Index batch) {
  if (terms.empty()) return tape.constant(Matrix::Zero(batch, 1));
  Var total;
  for (const auto& t : terms) {
    const Var& q = coords.at(static_cast<std::size_t>(t.coord));
    if (!q.valid()) throw OrderingError("frame depends on a coordinate that has not been encoded yet");
    Var f = t.fn == FrameFn::Identity ? q : col(q, t.fn == FrameFn::Cos ? 0 : 1);
    if (t.length >= 0) f = mul(f, lengths.at(static_cast<std::size_t>(t.length)));
    if (t.coefficient != 1.0) f = scale(f, t.coefficient);
    total = total.valid() ? add(total, f) : f;
  }
  return total;
}

}  // namespace

FrameVars eval_frame(Tape& tape, const SystemSpec& /*spec*/, const FrameRule& rule, const std::vector<Var>& coords,
                     const std::vector<Var>& lengths, Index batch) {
  FrameVars f;
  f.x = eval_terms(tape, rule.x, coords, lengths, batch);
  f.y = eval_terms(tape, rule.y, coords, lengths, batch);
  if (rule.rotation_coord >= 0) {
    const Var& q = coords.at(static_cast<std::size_t>(rule.rotation_coord));
    if (!q.valid()) throw OrderingError("frame rotation depends on a coordinate that has not been encoded yet");
    f.cos = col(q, 0);
    f.sin = col(q, 1);
  } else {
    f.cos = tape.constant(Matrix::Ones(batch, 1));
    f.sin = tape.constant(Matrix::Zero(batch, 1));
  }
  return f;
}

Var transform_rows(const FrameVars& f, bool inverse, double window_scale) {
  const Var& c = f.cos;
  const Var& s = f.sin;
  if (inverse) {
    return hcat({c, neg(s), neg(sub(mul(c, f.x), mul(s, f.y))), s, c, neg(add(mul(s, f.x), mul(c, f.y)))});
  }
  if (window_scale != 1.0) {
    return hcat({scale(c, window_scale), scale(s, window_scale), f.x, scale(neg(s), window_scale),
                 scale(c, window_scale), f.y});
  }
  return hcat({c, s, f.x, neg(s), c, f.y});
}

}  // namespace ad

}  // namespace lgv
