#pragma once

// Client side of the model bridge: newline-delimited JSON over a persistent
// local socket, one in-flight request per connection.
//
//   -> {"v":1,"op":"start_session","slice_dir":..,"start_frame":k,
//       "prompts":{"positives":[[x,y],..],"negatives":[[x,y],..]}}
//   <- {"v":1,"session_id":"..","frames":[{"index":k,"rle":[..],"width":W,"height":H}]}
//   -> {"v":1,"op":"propagate","session_id":"..","direction":"forward"|"reverse"}
//   <- {"v":1,"session_id":"..","frames":[...]}        start frame first, visit order
//   -> {"v":1,"op":"close","session_id":".."}
//   <- {"v":1,"session_id":"..","frames":[]}
//
// Any response may instead carry "error": {"code":..,"message":..}.
// RLE is row-major, alternating run lengths beginning with a zero run.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slicetrack/propagation.hpp"

namespace slicetrack::bridge {

inline constexpr int kProtocolVersion = 1;
inline constexpr const char* kEndpointEnv = "SLICETRACK_BRIDGE";

class ProtocolError : public Error {
 public:
  using Error::Error;
};

std::vector<std::uint32_t> rle_encode(const Mask2D& mask);
/// Throws ProtocolError unless the runs sum to exactly width*height.
Mask2D rle_decode(const std::vector<std::uint32_t>& runs, int width, int height);

struct Frame {
  int index = 0;
  Mask2D mask;
};

nlohmann::json frame_to_json(const Frame& f);
Frame frame_from_json(const nlohmann::json& j);

/// Blocking line-oriented socket.  Endpoints: "unix:/path/to/socket",
/// "tcp:host:port" or "host:port".
class LineChannel {
 public:
  LineChannel(const std::string& endpoint, std::chrono::milliseconds timeout);
  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  void send_line(const std::string& line);
  std::string recv_line();

 private:
  int fd_ = -1;
  std::string buffer_;
};

struct BridgeConfig {
  std::string endpoint;
  std::chrono::milliseconds timeout{std::chrono::minutes(10)};
  /// Slices for each session are exported below this directory.
  std::filesystem::path work_dir = std::filesystem::temp_directory_path() / "slicetrack-bridge";
  SliceFormat format = SliceFormat::jpeg;
  int jpeg_quality = 95;
  bool keep_slices = false;
};

/// Endpoint from the environment, or empty.
std::string endpoint_from_env();

std::unique_ptr<Propagator> bridge_propagator(BridgeConfig config);

}  // namespace slicetrack::bridge
