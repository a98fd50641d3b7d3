#include "ssr/world/world.hpp"

#include "ssr/errors.hpp"
#include "ssr/numerics/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ssr::world {
namespace {

constexpr double kPi = std::numbers::pi;

// Pose after driving `s` meters along a constant-curvature arc from `start`.
Pose arc_pose(const Pose& start, double curvature, double s) {
  if (std::abs(curvature) < 1e-12) {
    return {start.x + s * std::cos(start.heading), start.y + s * std::sin(start.heading), start.heading};
  }
  const double h = start.heading + curvature * s;
  return {start.x + (std::sin(h) - std::sin(start.heading)) / curvature,
          start.y - (std::cos(h) - std::cos(start.heading)) / curvature, h};
}

Vec2 rotate_to_ego(const Pose& ego, const Vec2& v) {
  const double c = std::cos(ego.heading), s = std::sin(ego.heading);
  return {v.x() * s - v.y() * c, v.x() * c + v.y() * s};
}

}  // namespace

NavigationCommand command_from_index(int code) {
  if (code < 0 || code >= kNumCommands) {
    throw DomainError("navigation command " + std::to_string(code) + " outside [0, 3)");
  }
  return static_cast<NavigationCommand>(code);
}

const char* command_name(NavigationCommand cmd) {
  switch (cmd) {
    case NavigationCommand::TurnLeft: return "left";
    case NavigationCommand::GoStraight: return "straight";
    case NavigationCommand::TurnRight: return "right";
  }
  return "?";
}

std::optional<NavigationCommand> parse_command(const std::string& name) {
  if (name == "left") return NavigationCommand::TurnLeft;
  if (name == "straight") return NavigationCommand::GoStraight;
  if (name == "right") return NavigationCommand::TurnRight;
  return std::nullopt;
}

void WorldConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("world config: " + what); };
  if (!(bev_extent_m > 0)) fail("bev_extent_m must be positive");
  if (grid_h < 2 || grid_w < 2) fail("grid must be at least 2x2");
  if (grid_h != grid_w) fail("grid must be square (cell size = 2R/grid_h)");
  if (channels < channel::kFirstMixed) fail("channels must be >= " + std::to_string(channel::kFirstMixed));
  if (horizon_steps < 1) fail("horizon_steps must be >= 1");
  if (!(step_dt > 0)) fail("step_dt must be positive");
  if (min_obstacles < 0 || max_obstacles < min_obstacles) fail("obstacle count range invalid");
  if (!(noise_std >= 0)) fail("noise_std must be >= 0");
  if (min_speed < 0 || max_speed < min_speed) fail("speed range invalid");
  if (history_frames < 0) fail("history_frames must be >= 0");
  if (samples_per_episode < 1) fail("samples_per_episode must be >= 1");
  if (!(ego_length > 0 && ego_width > 0)) fail("ego dimensions must be positive");
}

OrientedBox Obstacle::box(int frame) const {
  const Pose& p = track.at(static_cast<std::size_t>(frame));
  return OrientedBox{Vec2(p.x, p.y), p.heading, length, width};
}

std::span<const std::uint8_t> SceneSample::occupancy(int step) const {
  const std::size_t cells = static_cast<std::size_t>(bev_now.height) * bev_now.width;
  if (step < 0 || step >= horizon()) throw RangeError("occupancy step " + std::to_string(step));
  return std::span<const std::uint8_t>(future_occupancy).subspan(static_cast<std::size_t>(step) * cells, cells);
}

Episode generate_episode(const WorldConfig& cfg, std::uint64_t seed, std::optional<NavigationCommand> command) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0x5eed));
  Episode ep;
  ep.seed = seed;

  // Every draw happens unconditionally so that overriding the command leaves
  // all other draws untouched.
  const double u_cmd = rng.uniform();
  ep.command = u_cmd < 0.25 ? NavigationCommand::TurnLeft
                            : (u_cmd < 0.75 ? NavigationCommand::GoStraight : NavigationCommand::TurnRight);
  if (command) ep.command = *command;
  const double speed = rng.uniform(cfg.min_speed, cfg.max_speed);
  const double turn_angle = rng.uniform(0.5, 1.0) * kPi / 2;
  const double jitter = rng.normal();
  const double horizon_m = std::max(speed, 1.0) * cfg.horizon_steps * cfg.step_dt;
  ep.turn_curvature = turn_angle / horizon_m;
  switch (ep.command) {
    case NavigationCommand::TurnLeft: ep.curvature = ep.turn_curvature; break;
    case NavigationCommand::TurnRight: ep.curvature = -ep.turn_curvature; break;
    case NavigationCommand::GoStraight:
      ep.curvature = cfg.noise_std * cfg.straight_curvature_jitter * jitter;
      break;
  }

  const int frames = cfg.frames_per_episode();
  ep.ego.resize(static_cast<std::size_t>(frames));
  EgoState s{0.0, 0.0, 0.0, speed};
  const double ds = speed * cfg.step_dt;
  for (int f = 0; f < frames; ++f) {
    ep.ego[static_cast<std::size_t>(f)] = s;
    s.x += ds * std::cos(s.heading);
    s.y += ds * std::sin(s.heading);
    s.heading += ep.curvature * ds;
  }

  const Pose start = ep.ego[static_cast<std::size_t>(cfg.history_frames)].pose();
  const int count = cfg.min_obstacles + static_cast<int>(rng.below(
                                            static_cast<std::uint64_t>(cfg.max_obstacles - cfg.min_obstacles + 1)));
  for (int j = 0; j < count; ++j) {
    const double u_class = rng.uniform();
    const double veh_length = rng.uniform(3.8, 5.0);
    const double veh_width = rng.uniform(1.7, 2.1);
    const double along = rng.uniform(4.0, 35.0);
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double lateral = rng.uniform(3.0, 7.0);
    const double u_mode = rng.uniform();
    const double veh_speed = rng.uniform(1.0, 6.0);
    const double ped_heading = rng.uniform(0.0, 2 * kPi);
    const double ped_speed = rng.uniform(0.3, 1.5);
    const double u_branch = rng.uniform();
    const double branch_pick = rng.uniform();
    const double branch_along = rng.uniform(12.0, 30.0);

    Obstacle ob;
    Pose center;
    if (u_class < cfg.pedestrian_fraction) {
      ob.cls = ObstacleClass::Pedestrian;
      ob.length = ob.width = 0.7;
      const Pose p = arc_pose(start, ep.curvature, along);
      const double lat = lateral - 1.0;
      center = {p.x - side * lat * std::sin(p.heading), p.y + side * lat * std::cos(p.heading), ped_heading};
      ob.velocity = Vec2(std::cos(ped_heading), std::sin(ped_heading)) * ped_speed;
    } else if (u_branch < 0.3) {
      // Parked on a branch the ego does not take.
      ob.length = veh_length;
      ob.width = veh_width;
      std::vector<double> others;
      for (double k : {ep.turn_curvature, 0.0, -ep.turn_curvature}) {
        const bool taken = ep.command == NavigationCommand::GoStraight ? k == 0.0 : k == ep.curvature;
        if (!taken) others.push_back(k);
      }
      const double k = others[branch_pick < 0.5 ? 0 : 1];
      center = arc_pose(start, k, branch_along);
    } else {
      ob.length = veh_length;
      ob.width = veh_width;
      const Pose p = arc_pose(start, ep.curvature, along);
      const bool oncoming = u_mode >= 0.7;
      const double heading = oncoming ? p.heading + kPi : p.heading;
      center = {p.x - side * lateral * std::sin(p.heading), p.y + side * lateral * std::cos(p.heading), heading};
      if (u_mode >= 0.4) ob.velocity = Vec2(std::cos(heading), std::sin(heading)) * veh_speed;
    }
    ob.track.resize(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
      const double t = (f - cfg.history_frames) * cfg.step_dt;
      ob.track[static_cast<std::size_t>(f)] = {center.x + ob.velocity.x() * t, center.y + ob.velocity.y() * t,
                                               center.heading};
    }
    ep.obstacles.push_back(std::move(ob));
  }
  return ep;
}

std::vector<std::uint8_t> rasterize_occupancy(const Episode& episode, int obstacle_frame, const Pose& reference,
                                              const WorldConfig& cfg, bool include_pedestrians) {
  const GridGeometry grid = cfg.grid();
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(cfg.grid_h) * cfg.grid_w, 0);
  for (const auto& ob : episode.obstacles) {
    if (ob.cls == ObstacleClass::Pedestrian && !include_pedestrians) continue;
    const OrientedBox world_box = ob.box(obstacle_frame);
    const OrientedBox box{to_ego(reference, world_box.center), heading_to_ego(reference, world_box.heading),
                          world_box.length, world_box.width};
    for (int r = 0; r < cfg.grid_h; ++r) {
      for (int c = 0; c < cfg.grid_w; ++c) {
        if (box.contains(grid.cell_center(r, c))) occ[static_cast<std::size_t>(r * cfg.grid_w + c)] = 1;
      }
    }
    if (auto cell = grid.cell_of(box.center)) occ[static_cast<std::size_t>((*cell)[0] * cfg.grid_w + (*cell)[1])] = 1;
  }
  return occ;
}

BevFeature rasterize_bev(const Episode& episode, int frame, const WorldConfig& cfg) {
  cfg.validate();
  if (frame < 0 || frame >= episode.frames()) {
    throw RangeError("frame " + std::to_string(frame) + " outside episode of " + std::to_string(episode.frames()));
  }
  const GridGeometry grid = cfg.grid();
  const Pose ego = episode.ego[static_cast<std::size_t>(frame)].pose();
  const double R = cfg.bev_extent_m;
  BevFeature bev(cfg.grid_h, cfg.grid_w, cfg.channels);

  struct LocalObstacle {
    OrientedBox box;
    Vec2 velocity;
    ObstacleClass cls;
  };
  std::vector<LocalObstacle> local;
  for (const auto& ob : episode.obstacles) {
    const OrientedBox wb = ob.box(frame);
    local.push_back({OrientedBox{to_ego(ego, wb.center), heading_to_ego(ego, wb.heading), wb.length, wb.width},
                     rotate_to_ego(ego, ob.velocity), ob.cls});
  }

  // Route corridor: the three candidate branches from the current pose.
  std::vector<Vec2> route;
  const double route_length = 1.5 * R;
  for (double k : {episode.turn_curvature, 0.0, -episode.turn_curvature}) {
    for (double s = 0; s <= route_length; s += 0.5) {
      // Arc in the ego frame starting at the origin facing +y; left is -x.
      if (std::abs(k) < 1e-12) {
        route.emplace_back(0.0, s);
      } else {
        route.emplace_back(-(1 - std::cos(k * s)) / k, std::sin(k * s) / k);
      }
    }
  }

  std::vector<std::pair<Vec2, double>> trail;
  for (int back = 1; back <= 2; ++back) {
    if (frame - back < 0) break;
    const auto& e = episode.ego[static_cast<std::size_t>(frame - back)];
    trail.emplace_back(to_ego(ego, Vec2(e.x, e.y)), back == 1 ? 1.0 : 0.5);
  }

  const double lane2 = cfg.lane_half_width * cfg.lane_half_width;
  for (int r = 0; r < cfg.grid_h; ++r) {
    for (int c = 0; c < cfg.grid_w; ++c) {
      const Vec2 p = grid.cell_center(r, c);
      double nearest = INFINITY;
      for (const auto& ob : local) {
        nearest = std::min(nearest, ob.box.distance(p));
        if (ob.box.contains(p)) {
          bev.at(r, c, channel::kOccupancy) = 1;
          bev.at(r, c, ob.cls == ObstacleClass::Vehicle ? channel::kVehicle : channel::kPedestrian) = 1;
          bev.at(r, c, channel::kVelocityX) = ob.velocity.x() / 10;
          bev.at(r, c, channel::kVelocityY) = ob.velocity.y() / 10;
        }
      }
      bev.at(r, c, channel::kProximity) = std::isfinite(nearest) ? std::exp(-nearest / 5) : 0.0;
      for (const Vec2& q : route) {
        if ((q - p).squaredNorm() <= lane2) {
          bev.at(r, c, channel::kRoute) = 1;
          break;
        }
      }
      for (const auto& [q, value] : trail) {
        if ((q - p).norm() <= 1.0) bev.at(r, c, channel::kEgoTrail) = std::max(bev.at(r, c, channel::kEgoTrail), value);
      }
      bev.at(r, c, channel::kPositionX) = p.x() / R;
      bev.at(r, c, channel::kPositionY) = p.y() / R;
    }
  }
  for (const auto& ob : local) {
    if (auto cell = grid.cell_of(ob.box.center)) {
      const auto [r, c] = *cell;
      bev.at(r, c, channel::kOccupancy) = 1;
      bev.at(r, c, ob.cls == ObstacleClass::Vehicle ? channel::kVehicle : channel::kPedestrian) = 1;
      bev.at(r, c, channel::kVelocityX) = ob.velocity.x() / 10;
      bev.at(r, c, channel::kVelocityY) = ob.velocity.y() / 10;
    }
  }
  for (const auto& [q, value] : trail) {
    if (auto cell = grid.cell_of(q)) {
      const auto [r, c] = *cell;
      bev.at(r, c, channel::kEgoTrail) = std::max(bev.at(r, c, channel::kEgoTrail), value);
    }
  }

  if (cfg.channels > channel::kFirstMixed) {
    Rng noise(mix_seed(episode.seed, 0xbe70000ULL + static_cast<std::uint64_t>(frame)));
    for (int r = 0; r < cfg.grid_h; ++r) {
      for (int c = 0; c < cfg.grid_w; ++c) {
        for (int k = channel::kFirstMixed; k < cfg.channels; ++k) {
          const int base = (k - channel::kFirstMixed) % channel::kFirstMixed;
          const double n = noise.normal();
          bev.at(r, c, k) = 0.5 * bev.at(r, c, base) + cfg.noise_std * n;
        }
      }
    }
  }
  return bev;
}

std::vector<OrientedBox> ego_footprints(const Trajectory& traj, double length, double width) {
  std::vector<OrientedBox> boxes;
  double heading = kPi / 2;
  for (Index i = 0; i < traj.rows(); ++i) {
    if (i > 0) {
      const Vec2 d = traj.row(i).transpose() - traj.row(i - 1).transpose();
      if (d.norm() > 1e-9) heading = std::atan2(d.y(), d.x());
    }
    boxes.push_back(OrientedBox{traj.row(i).transpose(), heading, length, width});
  }
  return boxes;
}

SceneSample make_sample(const Episode& episode, int frame, const WorldConfig& cfg) {
  cfg.validate();
  const int nt = cfg.horizon_steps;
  if (frame < 0 || frame + nt > episode.frames() - 1) {
    throw RangeError("frame " + std::to_string(frame) + " + horizon " + std::to_string(nt) +
                     " exceeds episode of " + std::to_string(episode.frames()) + " frames");
  }
  SceneSample s;
  s.episode_seed = episode.seed;
  s.frame = frame;
  s.command = episode.command;
  s.bev_now = rasterize_bev(episode, frame, cfg);
  s.bev_next = rasterize_bev(episode, frame + 1, cfg);

  const Pose ref = episode.ego[static_cast<std::size_t>(frame)].pose();
  const double R = cfg.bev_extent_m;
  s.gt_trajectory.resize(nt, 2);
  for (int k = 1; k <= nt; ++k) {
    const auto& e = episode.ego[static_cast<std::size_t>(frame + k)];
    Vec2 p = to_ego(ref, Vec2(e.x, e.y));
    if (std::abs(p.x()) > R || std::abs(p.y()) > R) {
      s.clipped = true;
      p = p.cwiseMax(-R).cwiseMin(R);
    }
    s.gt_trajectory.row(k - 1) = p.transpose();
  }

  const std::size_t cells = static_cast<std::size_t>(cfg.grid_h) * cfg.grid_w;
  s.future_occupancy.reserve(cells * static_cast<std::size_t>(nt));
  for (int k = 1; k <= nt; ++k) {
    const auto occ = rasterize_occupancy(episode, frame + k, ref, cfg, cfg.occupancy_includes_pedestrians);
    s.future_occupancy.insert(s.future_occupancy.end(), occ.begin(), occ.end());
  }

  const auto boxes = ego_footprints(s.gt_trajectory, cfg.ego_length, cfg.ego_width);
  const GridGeometry grid = cfg.grid();
  for (int k = 0; k < nt && !s.gt_collision; ++k) {
    s.gt_collision = footprint_hits(boxes[static_cast<std::size_t>(k)], s.occupancy(k), grid);
  }
  return s;
}

std::vector<SceneSample> generate_samples(const WorldConfig& cfg, int episodes, std::uint64_t seed,
                                          std::vector<std::uint64_t>* episode_seeds) {
  cfg.validate();
  std::vector<SceneSample> samples;
  samples.reserve(static_cast<std::size_t>(episodes) * static_cast<std::size_t>(cfg.samples_per_episode));
  for (int i = 0; i < episodes; ++i) {
    const std::uint64_t es = mix_seed(seed, static_cast<std::uint64_t>(i));
    if (episode_seeds) episode_seeds->push_back(es);
    const Episode ep = generate_episode(cfg, es);
    for (int f = cfg.history_frames; f < cfg.history_frames + cfg.samples_per_episode; ++f) {
      samples.push_back(make_sample(ep, f, cfg));
    }
  }
  return samples;
}

}  // namespace ssr::world
