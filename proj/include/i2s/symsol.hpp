#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "i2s/rotation.hpp"

namespace i2s {

enum class ShapeId : std::uint32_t { Tet = 0, Cube, Ico, Cone, Cyl, TetX, CylO, SphX };

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct Keypoint {
  Vec3 position;
  int channel = 0;
  double weight = 1.0;
  bool marker = false;
};

/// A splat-rendered solid. `symmetry` is the rotation group of the rendered
/// object (marker included); `body_symmetry` ignores the marker.
struct Shape {
  ShapeId id = ShapeId::Tet;
  std::string name;
  std::vector<Keypoint> keypoints;
  std::vector<Rotation> symmetry;
  std::vector<Rotation> body_symmetry;
  bool marked = false;
  Vec3 marker = Vec3::Zero();
  double sphere_radius = 0.0;  // > 0: the body is a uniform sphere drawn as a disk
};

const std::vector<std::string>& shape_names();
ShapeId shape_from_name(const std::string& name);  // throws std::invalid_argument
const std::string& shape_name(ShapeId id);
const Shape& get_shape(ShapeId id);

/// Proper rotation group; continuous symmetries at 1 degree steps.
const std::vector<Rotation>& symmetry_group(ShapeId id);

/// Closure of a generator set under composition (tolerance 1e-9 on quaternions).
std::vector<Rotation> group_closure(const std::vector<Rotation>& generators);

struct RenderConfig {
  int height = 32;
  int width = 32;
  double sigma_px = 1.5;
};

constexpr int kImageChannels = 3;

/// Marker intensity factor: 0 for z <= 0, min(1, z / 0.1) above.
double marker_weight(double z);

/// Row-major HWC image in double precision.
std::vector<double> render(const Shape& shape, const Rotation& r, const RenderConfig& cfg = {});

bool marker_visible(const Shape& shape, const Rotation& r);

/// Every rotation producing the same image as r.
std::vector<Rotation> equivalent_rotations(const Shape& shape, const Rotation& r);

struct Sample {
  std::vector<float> image;  // HWC
  Rotation label;
  bool marker_visible = false;
  std::vector<Rotation> equivalents;  // test split only
};

struct Dataset {
  ShapeId shape = ShapeId::Tet;
  Split split = Split::Train;
  int height = 32;
  int width = 32;
  int channels = kImageChannels;
  std::vector<Sample> samples;
};

/// Per-sample RNG stream i is seeded from (seed, i), so results do not depend
/// on `threads`.
Dataset generate(ShapeId shape, std::size_t n, std::uint64_t seed, Split split, int threads = 1,
                 const RenderConfig& cfg = {});

/// "SYML" header: version u32, shape u32, split u8, count u64, height, width,
/// channels u32; then per sample float32 image, label as 4 float64,
/// marker_visible u8, and for the test split a u32 count plus quaternions.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace i2s
