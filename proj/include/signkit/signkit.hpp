#pragma once

#include "anchors.hpp"
#include "annotations.hpp"
#include "aras.hpp"
#include "clustering.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "geometry.hpp"
#include "image_io.hpp"
#include "imaging.hpp"
#include "ore.hpp"

namespace signkit {

inline constexpr const char* version = "0.3.0";

} // namespace signkit
