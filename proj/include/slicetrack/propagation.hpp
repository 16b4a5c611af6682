#pragma once

// Slice propagation: a CT stack is treated as a video and a prompted 2D mask
// is tracked from the start slice toward both ends of the stack.
//
// Session contract
//   1. prompt_frame() runs once and returns the prompted start-slice mask.
//   2. begin(d) rewinds tracking to the start slice for direction d and
//      returns that run's start-slice mask.
//   3. step(z) predicts slice z; z moves one slice at a time away from the
//      start in the current direction.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "slicetrack/core.hpp"
#include "slicetrack/preprocess.hpp"
#include "slicetrack/prompts.hpp"

namespace slicetrack {

enum class Direction { forward, reverse };  // forward = +z (cranial)

std::string_view to_string(Direction d);

class PropagationSession {
 public:
  virtual ~PropagationSession() = default;

  virtual Mask2D prompt_frame() = 0;
  virtual Mask2D begin(Direction direction) = 0;
  virtual Mask2D step(int z) = 0;
};

class Propagator {
 public:
  virtual ~Propagator() = default;

  [[nodiscard]] virtual std::string id() const = 0;
  /// Opens a fresh session.  Distinct sessions are independent.
  virtual std::unique_ptr<PropagationSession> open(const ImageStack& stack, const PromptSet& prompts) = 0;
};

/// A session broke the contract (wrong frame count, start slices disagree...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// A propagator failed while producing one slice.
class PropagationError : public Error {
 public:
  PropagationError(int slice, Direction direction, const std::string& what);

  [[nodiscard]] int slice() const { return slice_; }
  [[nodiscard]] Direction direction() const { return direction_; }

 private:
  int slice_;
  Direction direction_;
};

/// Masks of one directional run in visit order; frames[0] is the start slice.
struct DirectionalRun {
  Direction direction = Direction::forward;
  int start_z = 0;
  std::vector<Mask2D> frames;
};

struct MaskProvenance {
  std::string propagator_id;
  PromptSet prompts;
  bool forward_covered = false;
  bool reverse_covered = false;
};

struct Mask3D : BinaryGrid {
  MaskProvenance provenance;

  Mask3D() = default;
  explicit Mask3D(Dims d) : BinaryGrid(d) {}
};

/// Unions a forward run (covering [start, nz)) and a reverse run (covering
/// [0, start]) into one volume.  Arguments may come in either order.
Mask3D merge(const DirectionalRun& a, const DirectionalRun& b, int nz);

/// Voxelwise OR of two equally sized grids.
BinaryGrid union_grids(const BinaryGrid& a, const BinaryGrid& b);

struct PropagationStats {
  int step_calls = 0;
};

/// Drives one fresh session forward and reverse from prompts.start_z and
/// merges the two runs.
Mask3D propagate_bidirectional(Propagator& propagator, const ImageStack& stack, const PromptSet& prompts,
                               PropagationStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Propagators

/// Emits the recorded slices regardless of the prompts.
std::unique_ptr<Propagator> replay_propagator(BinaryGrid recorded);

struct ReferenceTrackerConfig {
  int tau = 20;             // max |pixel - region mean| admitted while growing
  int erosion_radius = 1;   // previous-frame mask erosion used as next seeds
  int bar_radius = 1;       // Chebyshev radius around each negative prompt that is excluded
};

/// Native intensity tracker: 8-connected region growing against a running
/// mean, seeded from the prompts on the start slice and from the eroded
/// previous mask afterwards.  Not a model emulation; it exercises the driver.
std::unique_ptr<Propagator> reference_propagator(ReferenceTrackerConfig config = {});

/// Region growing on one slice.  Seeds whose intensity is farther than tau
/// from `reference_mean` are dropped (pass a negative reference to keep all
/// seeds).  Returns the grown mask and the region mean through `mean_out`.
Mask2D grow_region(std::span<const std::uint8_t> image, int width, int height, const std::vector<Point>& seeds,
                   const Mask2D* barred, int tau, double reference_mean, double* mean_out);

}  // namespace slicetrack
