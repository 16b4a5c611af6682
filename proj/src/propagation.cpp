#include "slicetrack/propagation.hpp"

#include <cmath>
#include <deque>

#include "slicetrack/kernels.hpp"

namespace slicetrack {

std::string_view to_string(Direction d) { return d == Direction::forward ? "forward" : "reverse"; }

PropagationError::PropagationError(int slice, Direction direction, const std::string& what)
    : Error("slice " + std::to_string(slice) + " (" + std::string(to_string(direction)) + "): " + what),
      slice_(slice),
      direction_(direction) {}

BinaryGrid union_grids(const BinaryGrid& a, const BinaryGrid& b) {
  if (a.dims != b.dims) throw DimensionMismatch("union of " + to_string(a.dims) + " and " + to_string(b.dims));
  BinaryGrid out = a;
  kernels::parallel::union_into(out.voxels, b.voxels);
  return out;
}

namespace {

BinaryGrid run_to_grid(const DirectionalRun& run, int nz) {
  const Mask2D& first = run.frames.front();
  BinaryGrid g(Dims{first.width, first.height, nz});
  const int sign = run.direction == Direction::forward ? 1 : -1;
  for (std::size_t i = 0; i < run.frames.size(); ++i) g.set_slice(run.start_z + sign * static_cast<int>(i), run.frames[i]);
  return g;
}

}  // namespace

Mask3D merge(const DirectionalRun& a, const DirectionalRun& b, int nz) {
  if (a.direction == b.direction) throw ContractViolation("merge needs one forward and one reverse run");
  const DirectionalRun& fwd = a.direction == Direction::forward ? a : b;
  const DirectionalRun& rev = a.direction == Direction::forward ? b : a;
  if (fwd.start_z != rev.start_z) throw ContractViolation("runs start on different slices");
  const int start = fwd.start_z;
  if (start < 0 || start >= nz) throw ContractViolation("start slice " + std::to_string(start) + " outside stack");
  if (static_cast<int>(fwd.frames.size()) != nz - start)
    throw ContractViolation("forward run has " + std::to_string(fwd.frames.size()) + " frames, expected " +
                            std::to_string(nz - start));
  if (static_cast<int>(rev.frames.size()) != start + 1)
    throw ContractViolation("reverse run has " + std::to_string(rev.frames.size()) + " frames, expected " +
                            std::to_string(start + 1));
  if (fwd.frames.front() != rev.frames.front())
    throw ContractViolation("forward and reverse start-slice masks differ on slice " + std::to_string(start));

  Mask3D out;
  static_cast<BinaryGrid&>(out) = union_grids(run_to_grid(fwd, nz), run_to_grid(rev, nz));
  out.provenance.forward_covered = true;
  out.provenance.reverse_covered = true;
  return out;
}

Mask3D propagate_bidirectional(Propagator& propagator, const ImageStack& stack, const PromptSet& prompts,
                               PropagationStats* stats) {
  const int nz = stack.dims.nz;
  const int start = prompts.start_z;
  if (start < 0 || start >= nz)
    throw PreconditionError("start slice " + std::to_string(start) + " outside stack of " + std::to_string(nz));

  std::unique_ptr<PropagationSession> session;
  Mask2D initial;
  try {
    session = propagator.open(stack, prompts);
    initial = session->prompt_frame();
  } catch (const PropagationError&) {
    throw;
  } catch (const std::exception& e) {
    throw PropagationError(start, Direction::forward, e.what());
  }

  auto check_frame = [&](const Mask2D& m, int z, Direction d) {
    if (m.width != stack.dims.nx || m.height != stack.dims.ny)
      throw PropagationError(z, d, "frame is " + std::to_string(m.width) + "x" + std::to_string(m.height) +
                                       ", expected " + std::to_string(stack.dims.nx) + "x" +
                                       std::to_string(stack.dims.ny));
  };
  check_frame(initial, start, Direction::forward);

  int steps = 0;
  auto run = [&](Direction d) {
    DirectionalRun r{d, start, {}};
    const int sign = d == Direction::forward ? 1 : -1;
    const int end = d == Direction::forward ? nz : -1;
    try {
      Mask2D first = session->begin(d);
      check_frame(first, start, d);
      if (first != initial)
        throw ContractViolation(std::string(to_string(d)) + " run start mask differs from the prompted prediction");
      r.frames.push_back(std::move(first));
    } catch (const ContractViolation&) {
      throw;
    } catch (const PropagationError&) {
      throw;
    } catch (const std::exception& e) {
      throw PropagationError(start, d, e.what());
    }
    for (int z = start + sign; z != end; z += sign) {
      Mask2D m;
      try {
        m = session->step(z);
        ++steps;
      } catch (const ContractViolation&) {
        throw;
      } catch (const PropagationError&) {
        throw;
      } catch (const std::exception& e) {
        throw PropagationError(z, d, e.what());
      }
      check_frame(m, z, d);
      r.frames.push_back(std::move(m));
    }
    return r;
  };

  const DirectionalRun forward = run(Direction::forward);
  const DirectionalRun reverse = run(Direction::reverse);
  Mask3D out = merge(forward, reverse, nz);
  out.provenance.propagator_id = propagator.id();
  out.provenance.prompts = prompts;
  if (stats) stats->step_calls = steps;
  return out;
}

// ---------------------------------------------------------------------------
// Replay oracle

namespace {

class ReplaySession final : public PropagationSession {
 public:
  ReplaySession(const BinaryGrid& recorded, int start) : recorded_(recorded), start_(start) {}

  Mask2D prompt_frame() override { return recorded_.slice(start_); }
  Mask2D begin(Direction) override { return recorded_.slice(start_); }
  Mask2D step(int z) override { return recorded_.slice(z); }

 private:
  const BinaryGrid& recorded_;
  int start_;
};

class ReplayPropagator final : public Propagator {
 public:
  explicit ReplayPropagator(BinaryGrid recorded) : recorded_(std::move(recorded)) {}

  [[nodiscard]] std::string id() const override { return "replay"; }

  std::unique_ptr<PropagationSession> open(const ImageStack& stack, const PromptSet& prompts) override {
    if (stack.dims != recorded_.dims)
      throw DimensionMismatch("replay recording " + to_string(recorded_.dims) + " vs stack " + to_string(stack.dims));
    return std::make_unique<ReplaySession>(recorded_, prompts.start_z);
  }

 private:
  BinaryGrid recorded_;
};

}  // namespace

std::unique_ptr<Propagator> replay_propagator(BinaryGrid recorded) {
  return std::make_unique<ReplayPropagator>(std::move(recorded));
}

// ---------------------------------------------------------------------------
// Reference tracker

Mask2D grow_region(std::span<const std::uint8_t> image, int width, int height, const std::vector<Point>& seeds,
                   const Mask2D* barred, int tau, double reference_mean, double* mean_out) {
  Mask2D region(width, height);
  std::deque<Point> frontier;
  double sum = 0.0;
  std::size_t n = 0;
  auto pixel = [&](int x, int y) { return static_cast<double>(image[static_cast<std::size_t>(y) * width + x]); };

  for (const Point& s : seeds) {
    if (!region.in_bounds(s.x, s.y) || region.get(s.x, s.y)) continue;
    if (barred && barred->get(s.x, s.y)) continue;
    if (reference_mean >= 0.0 && std::fabs(pixel(s.x, s.y) - reference_mean) > tau) continue;
    region.set(s.x, s.y);
    sum += pixel(s.x, s.y);
    ++n;
    frontier.push_back(s);
  }

  while (!frontier.empty()) {
    const Point p = frontier.front();
    frontier.pop_front();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int x = p.x + dx;
        const int y = p.y + dy;
        if (!region.in_bounds(x, y) || region.get(x, y)) continue;
        if (barred && barred->get(x, y)) continue;
        const double v = pixel(x, y);
        if (std::fabs(v - sum / static_cast<double>(n)) > tau) continue;
        region.set(x, y);
        sum += v;
        ++n;
        frontier.push_back({x, y});
      }
    }
  }
  if (mean_out) *mean_out = n ? sum / static_cast<double>(n) : -1.0;
  return region;
}

namespace {

std::vector<Point> set_pixels(const Mask2D& m) {
  std::vector<Point> pts;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.get(x, y)) pts.push_back({x, y});
  return pts;
}

class ReferenceSession final : public PropagationSession {
 public:
  ReferenceSession(const ImageStack& stack, const PromptSet& prompts, ReferenceTrackerConfig cfg)
      : stack_(stack), prompts_(prompts), cfg_(cfg) {}

  Mask2D prompt_frame() override {
    const int w = stack_.dims.nx;
    const int h = stack_.dims.ny;
    Mask2D barred(w, h);
    for (const Point& p : prompts_.negatives)
      if (barred.in_bounds(p.x, p.y)) barred.set(p.x, p.y);
    barred = dilate(barred, cfg_.bar_radius);
    initial_ = grow_region(stack_.slice(prompts_.start_z), w, h, prompts_.positives, &barred, cfg_.tau, -1.0,
                           &initial_mean_);
    return initial_;
  }

  Mask2D begin(Direction direction) override {
    direction_ = direction;
    previous_ = initial_;
    previous_mean_ = initial_mean_;
    z_ = prompts_.start_z;
    return initial_;
  }

  Mask2D step(int z) override {
    const int expected = z_ + (direction_ == Direction::forward ? 1 : -1);
    if (z != expected)
      throw ContractViolation("step to slice " + std::to_string(z) + ", expected " + std::to_string(expected));
    z_ = z;
    const int w = stack_.dims.nx;
    const int h = stack_.dims.ny;
    if (previous_mean_ < 0.0) {
      previous_ = Mask2D(w, h);
      return previous_;
    }
    const auto seeds = set_pixels(erode(previous_, cfg_.erosion_radius));
    double mean = -1.0;
    previous_ = grow_region(stack_.slice(z), w, h, seeds, nullptr, cfg_.tau, previous_mean_, &mean);
    previous_mean_ = mean;
    return previous_;
  }

 private:
  const ImageStack& stack_;
  PromptSet prompts_;
  ReferenceTrackerConfig cfg_;
  Mask2D initial_;
  double initial_mean_ = -1.0;
  Mask2D previous_;
  double previous_mean_ = -1.0;
  Direction direction_ = Direction::forward;
  int z_ = 0;
};

class ReferencePropagator final : public Propagator {
 public:
  explicit ReferencePropagator(ReferenceTrackerConfig cfg) : cfg_(cfg) {}

  [[nodiscard]] std::string id() const override { return "reference"; }

  std::unique_ptr<PropagationSession> open(const ImageStack& stack, const PromptSet& prompts) override {
    return std::make_unique<ReferenceSession>(stack, prompts, cfg_);
  }

 private:
  ReferenceTrackerConfig cfg_;
};

}  // namespace

std::unique_ptr<Propagator> reference_propagator(ReferenceTrackerConfig config) {
  return std::make_unique<ReferencePropagator>(config);
}

}  // namespace slicetrack
