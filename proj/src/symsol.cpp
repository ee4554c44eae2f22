#include "i2s/symsol.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "i2s/binary_io.hpp"
#include "i2s/grids.hpp"

namespace i2s {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
constexpr std::uint32_t kDatasetVersion = 1;
constexpr double kBodyScale = 0.75;   // keypoints live inside this radius
constexpr int kHiddenSphereGrid = 1;  // SO(3) grid recursion for hidden-marker sphere labels

bool same_rotation(const Rotation& a, const Rotation& b) { return quaternion_similarity(a, b) > 1.0 - 1e-12; }

void add_unique(std::vector<Vec3>& pts, const Vec3& p) {
  for (const Vec3& q : pts) {
    if ((q - p).norm() < 1e-9) return;
  }
  pts.push_back(p);
}

// Orbit of `seeds` under `group`, deduplicated.
std::vector<Vec3> orbit(const std::vector<Rotation>& group, const std::vector<Vec3>& seeds) {
  std::vector<Vec3> out;
  for (const Vec3& s : seeds) {
    for (const Rotation& g : group) add_unique(out, g.apply(s));
  }
  return out;
}

void add_points(Shape& s, const std::vector<Vec3>& pts, int channel, double weight) {
  for (const Vec3& p : pts) s.keypoints.push_back({p, channel, weight, false});
}

std::vector<Rotation> axial_group(bool flip) {
  std::vector<Rotation> g;
  for (int k = 0; k < 360; ++k) g.push_back(Rotation::rot_z(k * kDeg));
  if (flip) {
    for (int k = 0; k < 360; ++k) g.push_back(Rotation::rot_z(k * kDeg) * Rotation::rot_x(kPi));
  }
  return g;
}

std::vector<Vec3> ring(double z, double radius) {
  std::vector<Vec3> pts;
  for (int k = 0; k < 360; ++k) pts.emplace_back(radius * std::cos(k * kDeg), radius * std::sin(k * kDeg), z);
  return pts;
}

// Vertices, edge midpoints and face centers (orbit of one face center),
// scaled so the vertices sit at radius kBodyScale.
void add_polyhedron(Shape& s, const std::vector<Vec3>& verts, const Vec3& face_center, bool marked) {
  const double scale = kBodyScale / verts.front().norm();
  std::vector<Vec3> v;
  for (const Vec3& p : verts) v.push_back(p * scale);
  double edge = INFINITY;
  for (std::size_t j = 1; j < v.size(); ++j) edge = std::min(edge, (v[0] - v[j]).norm());
  std::vector<Vec3> edges;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      if (std::abs((v[i] - v[j]).norm() - edge) < 1e-9) add_unique(edges, 0.5 * (v[i] + v[j]));
    }
  }
  add_points(s, v, 0, 1.0);
  add_points(s, edges, 1, 0.7);
  add_points(s, orbit(s.body_symmetry, {face_center * scale}), marked ? 1 : 2, 0.5);
}

Shape build_shape(ShapeId id) {
  Shape s;
  s.id = id;
  s.name = shape_name(id);
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  switch (id) {
    case ShapeId::Tet:
    case ShapeId::TetX: {
      const Vec3 axis = Vec3(1, 1, 1).normalized();
      s.body_symmetry = group_closure({Rotation::from_axis_angle(axis, 2 * kPi / 3), Rotation::rot_x(kPi)});
      const std::vector<Vec3> verts = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
      add_polyhedron(s, verts, -verts[3] / 3.0, id == ShapeId::TetX);
      if (id == ShapeId::TetX) {
        const double k = kBodyScale / std::sqrt(3.0);
        s.marker = 0.6 * k * verts[0] + 0.25 * k * verts[1] + 0.15 * k * verts[2];
      }
      break;
    }
    case ShapeId::Cube: {
      s.body_symmetry = group_closure({Rotation::rot_z(kPi / 2), Rotation::rot_x(kPi / 2)});
      std::vector<Vec3> verts;
      for (int i = 0; i < 8; ++i) verts.emplace_back(i & 1 ? 1 : -1, i & 2 ? 1 : -1, i & 4 ? 1 : -1);
      add_polyhedron(s, verts, Vec3(0, 0, 1), false);
      break;
    }
    case ShapeId::Ico: {
      const Vec3 v0(0, 1, phi);
      s.body_symmetry = group_closure(
          {Rotation::from_axis_angle(v0, 2 * kPi / 5), Rotation::from_axis_angle(Vec3(1, 1, 1), 2 * kPi / 3)});
      std::vector<Vec3> verts;
      for (int a : {-1, 1}) {
        for (int b : {-1, 1}) {
          verts.emplace_back(0, a, b * phi);
          verts.emplace_back(a, b * phi, 0);
          verts.emplace_back(b * phi, 0, a);
        }
      }
      add_polyhedron(s, verts, (Vec3(0, 1, phi) + Vec3(1, phi, 0) + Vec3(phi, 0, 1)) / 3.0, false);
      break;
    }
    case ShapeId::Cone: {
      s.body_symmetry = axial_group(false);
      add_points(s, ring(-0.45, 0.6), 0, 0.15);
      add_points(s, ring(0.0, 0.35), 1, 0.15);
      add_points(s, {Vec3(0, 0, kBodyScale)}, 2, 1.0);
      break;
    }
    case ShapeId::Cyl:
    case ShapeId::CylO: {
      s.body_symmetry = axial_group(true);
      add_points(s, ring(0.5, 0.5), 0, 0.15);
      add_points(s, ring(-0.5, 0.5), 0, 0.15);
      add_points(s, ring(0.0, 0.5), 1, 0.1);
      if (id == ShapeId::CylO) s.marker = Vec3(0.5, 0, 0);
      break;
    }
    case ShapeId::SphX: {
      s.sphere_radius = kBodyScale;
      s.marker = Vec3(0, 0, kBodyScale);
      break;
    }
  }
  s.marked = id == ShapeId::TetX || id == ShapeId::CylO || id == ShapeId::SphX;
  if (s.marked) {
    s.keypoints.push_back({s.marker, 2, 1.0, true});
    if (id == ShapeId::SphX) {
      s.symmetry = axial_group(false);
    } else {
      for (const Rotation& g : s.body_symmetry) {
        if ((g.apply(s.marker) - s.marker).norm() < 1e-9) s.symmetry.push_back(g);
      }
    }
  } else {
    s.symmetry = s.body_symmetry;
  }
  return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void write_rotation(std::ostream& os, const Rotation& r) {
  io::write_f64(os, r.w());
  io::write_f64(os, r.x());
  io::write_f64(os, r.y());
  io::write_f64(os, r.z());
}

Rotation read_rotation(std::istream& is) {
  const double w = io::read_f64(is), x = io::read_f64(is), y = io::read_f64(is), z = io::read_f64(is);
  return Rotation::from_quaternion(w, x, y, z);
}

}  // namespace

const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> names = {"tet", "cube", "ico", "cone", "cyl", "tetX", "cylO", "sphX"};
  return names;
}

ShapeId shape_from_name(const std::string& name) {
  const auto& names = shape_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<ShapeId>(i);
  }
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown shape '" + name + "' (valid: " + valid + ")");
}

const std::string& shape_name(ShapeId id) {
  const auto i = static_cast<std::size_t>(id);
  if (i >= shape_names().size()) throw std::invalid_argument("unknown shape id");
  return shape_names()[i];
}

const Shape& get_shape(ShapeId id) {
  static std::mutex mu;
  static std::map<ShapeId, Shape> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(id);
  if (it == cache.end()) it = cache.emplace(id, build_shape(id)).first;
  return it->second;
}

const std::vector<Rotation>& symmetry_group(ShapeId id) { return get_shape(id).symmetry; }

std::vector<Rotation> group_closure(const std::vector<Rotation>& generators) {
  std::vector<Rotation> group = {Rotation()};
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (const Rotation& g : generators) {
      const Rotation c = group[i] * g;
      bool found = false;
      for (const Rotation& h : group) {
        if (same_rotation(h, c)) {
          found = true;
          break;
        }
      }
      if (!found) group.push_back(c);
      if (group.size() > 10000) throw std::runtime_error("group closure does not terminate");
    }
  }
  return group;
}

double marker_weight(double z) { return z <= 0.0 ? 0.0 : std::min(1.0, z / 0.1); }

bool marker_visible(const Shape& shape, const Rotation& r) {
  return shape.marked && r.apply(shape.marker).z() > 0.0;
}

std::vector<double> render(const Shape& shape, const Rotation& r, const RenderConfig& cfg) {
  const int h = cfg.height, w = cfg.width;
  std::vector<double> img(static_cast<std::size_t>(h) * w * kImageChannels, 0.0);
  const double inv2s2 = 1.0 / (2.0 * cfg.sigma_px * cfg.sigma_px);
  const int reach = static_cast<int>(std::ceil(3.0 * cfg.sigma_px));
  if (shape.sphere_radius > 0.0) {
    const double rad = shape.sphere_radius * 0.5 * w;
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        const double dx = col + 0.5 - 0.5 * w, dy = row + 0.5 - 0.5 * h;
        const double rho = std::hypot(dx, dy);
        img[(static_cast<std::size_t>(row) * w + col) * kImageChannels] = 0.5 * (1.0 - std::tanh(rho - rad));
      }
    }
  }
  for (const Keypoint& k : shape.keypoints) {
    const Vec3 p = r.apply(k.position);
    double a = k.weight * (0.6 + 0.5 * p.z());
    if (k.marker) a = k.weight * marker_weight(p.z());
    if (a == 0.0) continue;
    const double cx = (p.x() + 1.0) * 0.5 * w - 0.5;
    const double cy = (1.0 - p.y()) * 0.5 * h - 0.5;
    const int c0 = static_cast<int>(std::lround(cx)), r0 = static_cast<int>(std::lround(cy));
    for (int row = std::max(0, r0 - reach); row <= std::min(h - 1, r0 + reach); ++row) {
      for (int col = std::max(0, c0 - reach); col <= std::min(w - 1, c0 + reach); ++col) {
        const double d2 = (col - cx) * (col - cx) + (row - cy) * (row - cy);
        img[(static_cast<std::size_t>(row) * w + col) * kImageChannels + k.channel] += a * std::exp(-d2 * inv2s2);
      }
    }
  }
  return img;
}

std::vector<Rotation> equivalent_rotations(const Shape& shape, const Rotation& r) {
  std::vector<Rotation> out;
  if (!shape.marked || marker_visible(shape, r)) {
    for (const Rotation& s : shape.symmetry) out.push_back(r * s);
    return out;
  }
  if (shape.sphere_radius > 0.0) {
    // every pose hiding the marker renders the same disk
    out.push_back(r);
    for (const Rotation& g : cached_so3_grid(kHiddenSphereGrid).rotations) {
      if (!marker_visible(shape, g)) out.push_back(g);
    }
    return out;
  }
  for (const Rotation& s : shape.body_symmetry) {
    const Rotation rs = r * s;
    if (!marker_visible(shape, rs)) out.push_back(rs);
  }
  return out;
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ull));
}

Dataset generate(ShapeId id, std::size_t n, std::uint64_t seed, Split split, int threads, const RenderConfig& cfg) {
  if (n < 1) throw std::invalid_argument("dataset needs at least one sample");
  const Shape& shape = get_shape(id);
  if (shape.sphere_radius > 0.0) cached_so3_grid(kHiddenSphereGrid);
  Dataset d;
  d.shape = id;
  d.split = split;
  d.height = cfg.height;
  d.width = cfg.width;
  d.samples.resize(n);
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < n; i += step) {
      std::mt19937_64 rng(sample_seed(seed, i));
      const Rotation r = sample_uniform(rng);
      Sample& s = d.samples[i];
      const std::vector<double> img = render(shape, r, cfg);
      s.image.assign(img.begin(), img.end());
      s.marker_visible = marker_visible(shape, r);
      std::vector<Rotation> eq = equivalent_rotations(shape, r);
      if (split == Split::Train) {
        std::uniform_int_distribution<std::size_t> pick(0, eq.size() - 1);
        s.label = eq[pick(rng)];
      } else {
        s.label = r;
        s.equivalents = std::move(eq);
      }
    }
  };
  const int t = std::max(1, threads);
  std::vector<std::thread> pool;
  for (int k = 1; k < t; ++k) pool.emplace_back(work, static_cast<std::size_t>(k), static_cast<std::size_t>(t));
  work(0, static_cast<std::size_t>(t));
  for (auto& th : pool) th.join();
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write dataset " + path);
  io::write_magic(os, "SYML");
  io::write_u32(os, kDatasetVersion);
  io::write_u32(os, static_cast<std::uint32_t>(d.shape));
  io::write_u8(os, static_cast<std::uint8_t>(d.split));
  io::write_u64(os, d.samples.size());
  io::write_u32(os, static_cast<std::uint32_t>(d.height));
  io::write_u32(os, static_cast<std::uint32_t>(d.width));
  io::write_u32(os, static_cast<std::uint32_t>(d.channels));
  for (const Sample& s : d.samples) {
    for (float v : s.image) io::write_f32(os, v);
    write_rotation(os, s.label);
    io::write_u8(os, s.marker_visible ? 1 : 0);
    if (d.split == Split::Test) {
      io::write_u32(os, static_cast<std::uint32_t>(s.equivalents.size()));
      for (const Rotation& r : s.equivalents) write_rotation(os, r);
    }
  }
  if (!os) throw std::runtime_error("failed writing dataset " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset " + path);
  io::expect_magic(is, "SYML");
  if (io::read_u32(is) != kDatasetVersion) throw std::runtime_error("unsupported dataset version in " + path);
  Dataset d;
  const std::uint32_t shape = io::read_u32(is);
  if (shape >= shape_names().size()) throw std::runtime_error("unknown shape id in " + path);
  d.shape = static_cast<ShapeId>(shape);
  const std::uint8_t split = io::read_u8(is);
  if (split > 1) throw std::runtime_error("bad split in " + path);
  d.split = static_cast<Split>(split);
  const std::uint64_t n = io::read_u64(is);
  d.height = static_cast<int>(io::read_u32(is));
  d.width = static_cast<int>(io::read_u32(is));
  d.channels = static_cast<int>(io::read_u32(is));
  if (d.height < 1 || d.width < 1 || d.height > 4096 || d.width > 4096 || d.channels != kImageChannels) {
    throw std::runtime_error("bad image dimensions in " + path);
  }
  const std::size_t pixels = static_cast<std::size_t>(d.height) * d.width * d.channels;
  d.samples.resize(n);
  for (Sample& s : d.samples) {
    s.image.resize(pixels);
    for (float& v : s.image) v = io::read_f32(is);
    s.label = read_rotation(is);
    s.marker_visible = io::read_u8(is) != 0;
    if (d.split == Split::Test) {
      const std::uint32_t m = io::read_u32(is);
      if (m > 1000000) throw std::runtime_error("corrupt equivalent set in " + path);
      s.equivalents.reserve(m);
      for (std::uint32_t j = 0; j < m; ++j) s.equivalents.push_back(read_rotation(is));
    }
  }
  return d;
}

}  // namespace i2s
