// Image strips: a grid of frames (rows x columns), each frame one image per
// body, written as an 8-bit RGB PNG.
#pragma once

#include "lgv/geometry.hpp"

#include <string>
#include <vector>

namespace lgv::cli {

using Frame = std::vector<Image>;  // one coverage image per body

// Cells are separated by a 1-pixel grey border. Bodies are tinted red,
// green and blue in turn; a single body is drawn in greyscale. The file
// carries no timestamp, so equal inputs give equal bytes.
void write_strip_png(const std::string& path, const std::vector<std::vector<Frame>>& rows);

}  // namespace lgv::cli
