#include <doctest.h>

#include "fixtures.hpp"
#include "ssr/errors.hpp"
#include "ssr/eval/eval.hpp"
#include "ssr/numerics/rng.hpp"

#include <numeric>

using namespace ssr;
using namespace ssr::eval;
using world::GridGeometry;
using world::Vec2;

namespace {

// Area of the ego rectangle clipped to an axis-aligned cell
// (Sutherland-Hodgman). Written independently of the SAT test.
double clipped_area(const world::OrientedBox& box, double x0, double x1, double y0, double y1) {
  std::vector<Vec2> poly;
  for (const Vec2& p : box.corners()) poly.push_back(p);
  auto clip = [&](auto inside, auto cross) {
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2 a = poly[i], b = poly[(i + 1) % poly.size()];
      if (inside(b)) {
        if (!inside(a)) out.push_back(cross(a, b));
        out.push_back(b);
      } else if (inside(a)) {
        out.push_back(cross(a, b));
      }
    }
    poly = out;
  };
  auto at_x = [](double x) {
    return [x](const Vec2& a, const Vec2& b) { return Vec2(x, a.y() + (b.y() - a.y()) * (x - a.x()) / (b.x() - a.x())); };
  };
  auto at_y = [](double y) {
    return [y](const Vec2& a, const Vec2& b) { return Vec2(a.x() + (b.x() - a.x()) * (y - a.y()) / (b.y() - a.y()), y); };
  };
  clip([&](const Vec2& p) { return p.x() >= x0; }, at_x(x0));
  clip([&](const Vec2& p) { return p.x() <= x1; }, at_x(x1));
  clip([&](const Vec2& p) { return p.y() >= y0; }, at_y(y0));
  clip([&](const Vec2& p) { return p.y() <= y1; }, at_y(y1));
  double area = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % poly.size()];
    area += a.x() * b.y() - a.y() * b.x();
  }
  return std::abs(area) / 2;
}

bool oracle_hit(const world::OrientedBox& box, const std::vector<std::uint8_t>& occ, const GridGeometry& g) {
  const double ch = g.cell_height(), cw = g.cell_width();
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      if (!occ[static_cast<std::size_t>(r) * g.cols + c]) continue;
      const double x0 = -g.extent + c * cw, y1 = g.extent - r * ch;
      if (clipped_area(box, x0, x0 + cw, y1 - ch, y1) > 1e-12) return true;
    }
  }
  return false;
}

SceneSample blank_sample(const GridGeometry& g, int nt) {
  SceneSample s;
  s.bev_now = world::BevFeature(g.rows, g.cols, 10);
  s.bev_next = s.bev_now;
  s.gt_trajectory = Trajectory::Zero(nt, 2);
  s.future_occupancy.assign(static_cast<std::size_t>(g.rows) * g.cols * nt, 0);
  return s;
}

void mark(SceneSample& s, const GridGeometry& g, int step, const Vec2& p) {
  const auto rc = g.cell_of(p);
  REQUIRE(rc);
  s.future_occupancy[static_cast<std::size_t>(step) * g.rows * g.cols + (*rc)[0] * g.cols + (*rc)[1]] = 1;
}

std::vector<std::uint8_t> step_grid(const SceneSample& s, int step) {
  const auto o = s.occupancy(step);
  return {o.begin(), o.end()};
}

const std::vector<double> kHorizons{1.0, 2.0, 3.0};

}  // namespace

TEST_CASE("step_errors basics") {
  world::WorldConfig wc = ssr::testing::small_world();
  wc.grid_h = wc.grid_w = 32;
  const auto samples = world::generate_samples(wc, 10, 5);

  SUBCASE("prediction equal to the label") {
    int checked = 0;
    for (const auto& s : samples) {
      if (s.gt_collision) continue;
      const auto e = step_errors(s.gt_trajectory, s, wc.grid(), wc.ego_length, wc.ego_width);
      for (int i = 0; i < s.horizon(); ++i) {
        CHECK(e.l2[i] == 0.0);
        CHECK(e.collision[i] == 0);
      }
      ++checked;
    }
    CHECK(checked > 0);
  }
  SUBCASE("3-4-5 displacement") {
    const auto& s = samples.front();
    Trajectory pred = s.gt_trajectory;
    pred.col(0).array() += 3;
    pred.col(1).array() += 4;
    const auto e = step_errors(pred, s, wc.grid(), 4.0, 1.8);
    for (double v : e.l2) CHECK(v == doctest::Approx(5.0).epsilon(1e-14));
  }
  SUBCASE("label collisions agree with the dataset flag") {
    for (const auto& s : samples) {
      const auto e = step_errors(s.gt_trajectory, s, wc.grid(), wc.ego_length, wc.ego_width);
      const bool any = std::any_of(e.collision.begin(), e.collision.end(), [](auto v) { return v != 0; });
      CHECK(any == s.gt_collision);
    }
  }
  SUBCASE("errors") {
    const auto& s = samples.front();
    CHECK_THROWS_AS(step_errors(Trajectory::Zero(4, 2), s, wc.grid(), 4, 1.8), DimensionError);
    CHECK_THROWS_AS(step_errors(s.gt_trajectory, s, wc.grid(), 0, 1.8), DomainError);
  }
}

TEST_CASE("obstacle ahead: first colliding step matches the clipping oracle") {
  const GridGeometry g{25.0, 32, 32};
  SceneSample s = blank_sample(g, 6);
  for (int i = 0; i < 6; ++i) mark(s, g, i, Vec2(0.3, 5.0));
  Trajectory pred(6, 2);
  for (int i = 0; i < 6; ++i) pred.row(i) << 0.0, 2.0 * 0.5 * (i + 1);

  const auto e = step_errors(pred, s, g, 4.0, 1.8);
  const auto boxes = world::ego_footprints(pred, 4.0, 1.8);
  int first = -1, first_oracle = -1;
  for (int i = 0; i < 6; ++i) {
    const bool o = oracle_hit(boxes[i], step_grid(s, i), g);
    CHECK(static_cast<bool>(e.collision[i]) == o);
    if (e.collision[i] && first < 0) first = i;
    if (o && first_oracle < 0) first_oracle = i;
  }
  CHECK(first == first_oracle);
  // The cell spans y in [4.6875, 6.25]; the box front (y + 2) enters it at y = 3.
  CHECK(first == 2);
}

TEST_CASE("collision indicators match the oracle on random scenes") {
  const GridGeometry g{10.0, 12, 12};
  Rng rng(77);
  int hits = 0;
  for (int trial = 0; trial < 200; ++trial) {
    SceneSample s = blank_sample(g, 6);
    for (auto& v : s.future_occupancy) v = rng.uniform() < 0.04;
    Trajectory pred(6, 2);
    Vec2 p(rng.uniform(-3, 3), rng.uniform(-3, 3));
    double heading = rng.uniform(0, 6.3);
    for (int i = 0; i < 6; ++i) {
      heading += rng.uniform(-0.6, 0.6);
      p += rng.uniform(0.2, 2.0) * Vec2(std::cos(heading), std::sin(heading));
      pred.row(i) = p.transpose();
    }
    const double len = rng.uniform(1, 5), wid = rng.uniform(0.5, 2.5);
    const auto e = step_errors(pred, s, g, len, wid);
    const auto boxes = world::ego_footprints(pred, len, wid);
    for (int i = 0; i < 6; ++i) {
      CHECK(static_cast<bool>(e.collision[i]) == oracle_hit(boxes[i], step_grid(s, i), g));
      hits += e.collision[i];
    }
  }
  CHECK(hits > 50);  // both outcomes exercised
  CHECK(hits < 1100);
}

TEST_CASE("collision checking is rigid-transform equivariant") {
  const GridGeometry g{12.0, 16, 16};
  const double cs = g.cell_width();
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    SceneSample s = blank_sample(g, 6);
    // Occupancy away from the border so shifted copies lose nothing.
    for (int t = 0; t < 6; ++t) {
      for (int r = 3; r < 13; ++r) {
        for (int c = 3; c < 13; ++c) s.future_occupancy[(t * 16 + r) * 16 + c] = rng.uniform() < 0.08;
      }
    }
    Trajectory pred(6, 2);
    for (int i = 0; i < 6; ++i) pred.row(i) << rng.uniform(-4, 4), rng.uniform(-4, 4);
    const auto base = step_errors(pred, s, g, 3.0, 1.5);

    // Translation by whole cells.
    const int dr = static_cast<int>(rng.below(5)) - 2, dc = static_cast<int>(rng.below(5)) - 2;
    SceneSample shifted = blank_sample(g, 6);
    for (int t = 0; t < 6; ++t) {
      for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) {
          if (s.future_occupancy[(t * 16 + r) * 16 + c]) shifted.future_occupancy[(t * 16 + r + dr) * 16 + c + dc] = 1;
        }
      }
    }
    Trajectory moved = pred;
    moved.col(0).array() += dc * cs;
    moved.col(1).array() -= dr * cs;
    CHECK(step_errors(moved, shifted, g, 3.0, 1.5).collision == base.collision);

    // Half turn: the symmetric ego box makes even the first heading agree.
    SceneSample turned = blank_sample(g, 6);
    for (int t = 0; t < 6; ++t) {
      for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) turned.future_occupancy[(t * 16 + 15 - r) * 16 + 15 - c] = s.future_occupancy[(t * 16 + r) * 16 + c];
      }
    }
    CHECK(step_errors(Trajectory(-pred), turned, g, 3.0, 1.5).collision == base.collision);

    // Quarter turn, box by box: (x, y) -> (-y, x), cell (r, c) -> (W-1-c, r).
    const auto boxes = world::ego_footprints(pred, 3.0, 1.5);
    for (int t = 0; t < 6; ++t) {
      std::vector<std::uint8_t> rot(256, 0);
      for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) rot[(15 - c) * 16 + r] = s.future_occupancy[(t * 16 + r) * 16 + c];
      }
      world::OrientedBox b = boxes[t];
      b.center = Vec2(-b.center.y(), b.center.x());
      b.heading += M_PI / 2;
      CHECK(world::footprint_hits(b, rot, g) == static_cast<bool>(base.collision[t]));
    }
  }
}

TEST_CASE("horizon steps") {
  CHECK(horizon_steps(kHorizons, 0.5, 6) == std::vector<int>{2, 4, 6});
  const std::vector<double> late{1.0, 4.0};
  CHECK_THROWS_AS(horizon_steps(late, 0.5, 6), RangeError);
  const std::vector<double> odd{0.75};
  CHECK_THROWS_AS(horizon_steps(odd, 0.5, 6), RangeError);
  const std::vector<int> bad{7};
  const std::vector<double> six(6, 1.0);
  CHECK_THROWS_AS(protocol_l2(six, bad), RangeError);
}

TEST_CASE("L2 protocol") {
  const std::vector<int> steps{2, 4, 6};
  SUBCASE("worked example") {
    const std::vector<double> l2{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    const auto s = protocol_l2(l2, steps);
    CHECK(s.max == std::vector<double>{0.2, 0.4, 0.6});
    CHECK(s.avg[2] == doctest::Approx(0.35).epsilon(1e-15));
    CHECK(s.avg[0] == doctest::Approx(0.15).epsilon(1e-15));
  }
  SUBCASE("constant sequence") {
    const std::vector<double> l2(6, 1.7);
    const auto s = protocol_l2(l2, steps);
    for (int h = 0; h < 3; ++h) {
      CHECK(s.avg[h] == doctest::Approx(1.7).epsilon(1e-15));
      CHECK(s.max[h] == 1.7);
    }
  }
  SUBCASE("random sequences against a reference") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 6 + static_cast<int>(rng.below(6));
      std::vector<double> l2(n);
      for (double& v : l2) v = rng.uniform(0, 10);
      std::vector<int> hs;
      for (int k = 0; k < 4; ++k) hs.push_back(1 + static_cast<int>(rng.below(n)));
      const auto s = protocol_l2(l2, hs);
      for (std::size_t h = 0; h < hs.size(); ++h) {
        const double ref = std::accumulate(l2.begin(), l2.begin() + hs[h], 0.0) / hs[h];
        CHECK(std::abs(s.avg[h] - ref) <= 1e-12);
        CHECK(s.max[h] == l2[hs[h] - 1]);
      }
    }
  }
}

TEST_CASE("collision protocol") {
  const std::vector<int> steps{2, 4, 6};
  SUBCASE("no collisions") {
    const std::vector<std::uint8_t> none(6, 0);
    const auto s = protocol_cr(none, steps);
    for (int h = 0; h < 3; ++h) CHECK(s.avg[h] + s.max[h] == 0.0);
  }
  SUBCASE("single hit at step 5") {
    const std::vector<std::uint8_t> hit{0, 0, 0, 0, 1, 0};
    const auto s = protocol_cr(hit, steps);
    CHECK(s.max == std::vector<double>{0, 0, 1});
    CHECK(s.avg[2] == doctest::Approx(2.0 / 6).epsilon(1e-15));
    const auto plain = protocol_cr(hit, steps, false);
    CHECK(plain.max == std::vector<double>{0, 0, 0});
    CHECK(plain.avg[2] == doctest::Approx(1.0 / 6).epsilon(1e-15));
  }
  SUBCASE("random sequences: reference and monotone MAX") {
    Rng rng(31);
    const std::vector<int> all{1, 2, 3, 4, 5, 6};
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<std::uint8_t> hits(6);
      for (auto& v : hits) v = rng.uniform() < 0.15;
      const auto s = protocol_cr(hits, all);
      for (int t = 1; t <= 6; ++t) {
        const bool any = std::any_of(hits.begin(), hits.begin() + t, [](auto v) { return v != 0; });
        CHECK(s.max[t - 1] == (any ? 1.0 : 0.0));
        double ref = 0;
        for (int i = 1; i <= t; ++i) ref += std::any_of(hits.begin(), hits.begin() + i, [](auto v) { return v != 0; });
        CHECK(std::abs(s.avg[t - 1] - ref / t) <= 1e-12);
        if (t > 1) CHECK(s.max[t - 1] >= s.max[t - 2]);
      }
    }
  }
}

TEST_CASE("dataset summary matches a recount") {
  Rng rng(12);
  std::vector<SampleEval> evals(10);
  for (std::size_t k = 0; k < evals.size(); ++k) {
    auto& e = evals[k];
    e.errors.l2.resize(6);
    e.errors.collision.resize(6);
    e.errors.off_route.resize(6);
    for (int i = 0; i < 6; ++i) {
      e.errors.l2[i] = rng.uniform(0, 3);
      e.errors.collision[i] = rng.uniform() < 0.2;
      e.errors.off_route[i] = rng.uniform() < 0.1;
    }
    e.gt_collision = k == 3 || k == 7;
  }
  EvalConfig cfg;
  const auto r = summarize(evals, cfg, 0.5);
  CHECK(r.samples == 10);
  CHECK(r.excluded_gt_collision == 2);
  const int steps[] = {2, 4, 6};
  for (int h = 0; h < 3; ++h) {
    double l2 = 0, crash = 0, lost = 0;
    for (const auto& e : evals) {
      l2 += e.errors.l2[steps[h] - 1];
      if (e.gt_collision) continue;
      crash += std::any_of(e.errors.collision.begin(), e.errors.collision.begin() + steps[h], [](auto v) { return v != 0; });
      lost += std::any_of(e.errors.off_route.begin(), e.errors.off_route.begin() + steps[h], [](auto v) { return v != 0; });
    }
    CHECK(r.l2.max[h] == doctest::Approx(l2 / 10).epsilon(1e-14));
    CHECK(r.cr.max[h] == doctest::Approx(100.0 * crash / 8).epsilon(1e-14));
    CHECK(r.ccr.max[h] == doctest::Approx(100.0 * lost / 8).epsilon(1e-14));
  }
  const auto some = summarize(evals, cfg, 0.5, [](const SampleEval& e) { return !e.gt_collision; });
  CHECK(some.samples == 8);
  CHECK(some.excluded_gt_collision == 0);

  const std::string text = format_report(r);
  for (const char* col : {"1s", "2s", "3s", "Avg.", "L2 (m)", "Collision Rate (%)", "MAX", "AVG"}) {
    CHECK(text.find(col) != std::string::npos);
  }
}

TEST_CASE("evaluate_samples") {
  const world::WorldConfig wc = ssr::testing::small_world();
  const auto samples = world::generate_samples(wc, 4, 21);
  const model::ModelConfig mc = ssr::testing::small_model();
  auto params = model::init_params(mc, 3);
  Rng rng(1);
  ssr::testing::perturb(params, rng);
  const auto before = params.clone();

  EvalConfig cfg;
  const auto a = evaluate_samples(params, mc, samples, wc.grid(), cfg);
  cfg.threads = 3;
  const auto b = evaluate_samples(params, mc, samples, wc.grid(), cfg);
  REQUIRE(a.size() == samples.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].errors.l2 == b[i].errors.l2);
    CHECK(a[i].errors.collision == b[i].errors.collision);
    CHECK(a[i].used_command == samples[i].command);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(params.entries()[i].tensor.value() == before.entries()[i].tensor.value());
  }

  cfg.threads = 1;
  cfg.command = CommandOverride::Right;
  const auto right = evaluate_samples(params, mc, samples, wc.grid(), cfg);
  for (const auto& e : right) CHECK(e.used_command == world::NavigationCommand::TurnRight);

  cfg.command = CommandOverride::Random;
  cfg.random_command_seed = 5;
  const auto r1 = evaluate_samples(params, mc, samples, wc.grid(), cfg);
  const auto r2 = evaluate_samples(params, mc, samples, wc.grid(), cfg);
  int counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].used_command == r2[i].used_command);
    ++counts[world::command_index(r1[i].used_command)];
  }
  CHECK(counts[0] > 0);
  CHECK(counts[1] > 0);
  CHECK(counts[2] > 0);
}

TEST_CASE("eval config") {
  EvalConfig cfg;
  cfg.command = CommandOverride::Left;
  cfg.horizons_s = {0.5, 1.5};
  nlohmann::json j = cfg;
  const auto back = j.get<EvalConfig>();
  CHECK(back.command == CommandOverride::Left);
  CHECK(back.horizons_s == cfg.horizons_s);
  CHECK(parse_override("random") == CommandOverride::Random);
  CHECK_FALSE(parse_override("sideways"));
  cfg.ego_width = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("table layout") {
  Table t;
  t.label_header = "Number";
  t.groups = {"L2 (m)", "CR (%)"};
  t.horizon_labels = {"1s", "2s", "3s"};
  const std::vector<double> seeds{0.2, 0.4};
  t.rows.push_back({"8", std::vector<Stat>(8, Stat::of(seeds))});
  const auto text = format_table(t);
  CHECK(text.find("0.30±0.14") != std::string::npos);
  // Every line has the same display width.
  std::istringstream in(text);
  std::size_t width = 0;
  for (std::string line; std::getline(in, line);) {
    std::size_t cols = 0;
    for (unsigned char ch : line) cols += (ch & 0xC0) != 0x80;
    if (width == 0) width = cols;
    CHECK(cols == width);
  }
}
