// Planar rigid transforms, bilinear image resampling and the frame maps that
// place attention windows (encoder) and body canvases (decoder).
//
// Normalized image coordinates: x runs from -1 (left column) to +1 (right
// column), y from +1 (top row) to -1 (bottom row); pixel centers sit on the
// grid nodes, so one pixel pitch is 2 / (W - 1).
#pragma once

#include "lgv/autodiff/ops.hpp"
#include "lgv/system_spec.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace lgv {

using Image = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PlanarTransform {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

// [[cos, sin, x], [-sin, cos, y], [0, 0, 1]].
Eigen::Matrix3d make_transform(double x, double y, double theta);
Eigen::Matrix3d invert_transform(double x, double y, double theta);
inline Eigen::Matrix3d make_transform(const PlanarTransform& t) { return make_transform(t.x, t.y, t.theta); }
inline Eigen::Matrix3d invert_transform(const PlanarTransform& t) { return invert_transform(t.x, t.y, t.theta); }

// out(p) = bilinear(img, A p) with zero padding, A the top two rows of a
// 3x3 transform.
Image sample_image(const Image& img, const Eigen::Matrix3d& transform);
Image sample_image(const Image& img, const PlanarTransform& t);

// Frame of coordinate j's attention window. `q` holds generalized
// coordinates already encoded; a missing dependency raises OrderingError.
PlanarTransform enc_frame(const SystemSpec& spec, int j, const std::vector<std::optional<double>>& q,
                          const std::vector<double>& c);
PlanarTransform dec_frame(const SystemSpec& spec, int i, const Eigen::VectorXd& q, const std::vector<double>& c);

namespace ad {

// Batched bilinear sampler. images: [1 or B x H*W] (row-major pixels),
// affine: [B x 6] rows (a11 a12 a13 a21 a22 a23) mapping output to source
// locations. Differentiable in both inputs.
Var grid_sample(Var images, Var affine, int height, int width);

// Frame parameters for a batch, each [B x 1].
struct FrameVars {
  Var x;
  Var y;
  Var cos;
  Var sin;
};

// Evaluates a frame rule. `coords[j]` is [B x 1] for translational and
// [B x 2] (cos, sin) for rotational coordinates; entries that the rule does
// not reference may be invalid. `lengths` are [1 x 1] learnable constants.
FrameVars eval_frame(Tape& tape, const SystemSpec& spec, const FrameRule& rule, const std::vector<Var>& coords,
                     const std::vector<Var>& lengths, Index batch);

// Affine rows of T(x, y, theta) (window placement) or of its inverse
// (canvas placement), optionally composed with an isotropic window scale.
Var transform_rows(const FrameVars& f, bool inverse, double window_scale = 1.0);

}  // namespace ad

}  // namespace lgv
