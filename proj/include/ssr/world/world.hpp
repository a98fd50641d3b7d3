#pragma once

#include "ssr/numerics/tensor.hpp"
#include "ssr/world/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ssr::world {

enum class NavigationCommand : int { TurnLeft = 0, GoStraight = 1, TurnRight = 2 };
inline constexpr int kNumCommands = 3;

NavigationCommand command_from_index(int code);
const char* command_name(NavigationCommand cmd);
std::optional<NavigationCommand> parse_command(const std::string& name);
inline int command_index(NavigationCommand cmd) { return static_cast<int>(cmd); }

// Channel layout of the rasterized BEV feature. Channels from kFirstMixed on
// are fixed mixtures of the base channels plus Gaussian feature noise.
namespace channel {
inline constexpr int kOccupancy = 0;
inline constexpr int kVehicle = 1;
inline constexpr int kPedestrian = 2;
inline constexpr int kRoute = 3;
inline constexpr int kEgoTrail = 4;
inline constexpr int kProximity = 5;
inline constexpr int kVelocityX = 6;
inline constexpr int kVelocityY = 7;
inline constexpr int kPositionX = 8;
inline constexpr int kPositionY = 9;
inline constexpr int kFirstMixed = 10;
}  // namespace channel

struct WorldConfig {
  double bev_extent_m = 25.0;  // half-width R of the ego-centric square
  int grid_h = 32;
  int grid_w = 32;
  int channels = 16;
  int horizon_steps = 6;  // N_t
  double step_dt = 0.5;
  int min_obstacles = 2;
  int max_obstacles = 6;
  double noise_std = 0.05;
  double min_speed = 2.0;
  double max_speed = 8.0;
  int history_frames = 2;
  int samples_per_episode = 4;
  double lane_half_width = 1.75;
  double pedestrian_fraction = 0.2;
  // Whether pedestrians count as obstacles in the future occupancy grids
  // (collision-rate class split).
  bool occupancy_includes_pedestrians = true;
  // Curvature std of a go-straight episode per unit noise_std.
  double straight_curvature_jitter = 0.02;
  double ego_length = 4.0;
  double ego_width = 1.8;

  void validate() const;
  double cell_size() const { return 2 * bev_extent_m / grid_h; }
  int frames_per_episode() const { return history_frames + samples_per_episode + horizon_steps; }
  GridGeometry grid() const { return {bev_extent_m, grid_h, grid_w}; }
};

struct EgoState {
  double x = 0, y = 0, heading = 0, speed = 0;
  Pose pose() const { return {x, y, heading}; }
};

enum class ObstacleClass : int { Vehicle = 0, Pedestrian = 1 };

struct Obstacle {
  ObstacleClass cls = ObstacleClass::Vehicle;
  double length = 4.5;
  double width = 1.9;
  Vec2 velocity = Vec2::Zero();  // world frame, constant
  std::vector<Pose> track;       // per frame center + heading (world)

  OrientedBox box(int frame) const;
};

struct Episode {
  std::vector<EgoState> ego;  // per frame, world meters
  std::vector<Obstacle> obstacles;
  NavigationCommand command = NavigationCommand::GoStraight;
  std::uint64_t seed = 0;
  double turn_curvature = 0;  // |curvature| of the turning branches (1/m)
  double curvature = 0;       // signed curvature actually driven (left > 0)

  int frames() const { return static_cast<int>(ego.size()); }
};

// Dense H×W×C feature grid, row-major with channels fastest.
struct BevFeature {
  int height = 0, width = 0, channels = 0;
  Vector data;

  BevFeature() = default;
  BevFeature(int h, int w, int c) : height(h), width(w), channels(c), data(Vector::Zero(Index{h} * w * c)) {}

  double& at(int h, int w, int c) { return data[(Index{h} * width + w) * channels + c]; }
  double at(int h, int w, int c) const { return data[(Index{h} * width + w) * channels + c]; }
  // (H·W)×C tensor view used by the model.
  Tensor as_tensor() const { return Tensor(Shape{Index{height} * width, channels}, data); }
};

// N_t×2 waypoints in ego-frame meters (+x right, +y forward).
using Trajectory = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

struct SceneSample {
  BevFeature bev_now;
  BevFeature bev_next;
  NavigationCommand command = NavigationCommand::GoStraight;
  Trajectory gt_trajectory;
  std::vector<std::uint8_t> future_occupancy;  // N_t grids of H×W, row-major
  bool gt_collision = false;
  bool clipped = false;
  std::uint64_t episode_seed = 0;
  int frame = 0;

  int horizon() const { return static_cast<int>(gt_trajectory.rows()); }
  std::span<const std::uint8_t> occupancy(int step) const;
};

// Constant-speed arc whose curvature sign follows the command; obstacles move
// at constant velocity. Deterministic in (cfg, seed). When `command` is given
// it overrides the drawn command without changing any other draw.
Episode generate_episode(const WorldConfig& cfg, std::uint64_t seed,
                         std::optional<NavigationCommand> command = std::nullopt);

BevFeature rasterize_bev(const Episode& episode, int frame, const WorldConfig& cfg);

// Binary H×W occupancy of the obstacles at `obstacle_frame`, drawn in the ego
// frame of `reference`. A cell is occupied when its center lies inside a box,
// and the cell holding a box center is always occupied.
std::vector<std::uint8_t> rasterize_occupancy(const Episode& episode, int obstacle_frame, const Pose& reference,
                                              const WorldConfig& cfg, bool include_pedestrians);

// Ego footprint at each waypoint: heading from waypoint i-1 to i, the first
// one facing forward; a zero-length step keeps the previous heading.
std::vector<OrientedBox> ego_footprints(const Trajectory& traj, double length, double width);

SceneSample make_sample(const Episode& episode, int frame, const WorldConfig& cfg);

// Every sample of `episodes` episodes with seeds mix_seed(seed, i).
std::vector<SceneSample> generate_samples(const WorldConfig& cfg, int episodes, std::uint64_t seed,
                                          std::vector<std::uint64_t>* episode_seeds = nullptr);

}  // namespace ssr::world
