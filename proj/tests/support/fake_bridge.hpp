#pragma once

// In-process stand-in for the model bridge: serves the line protocol on a
// Unix socket and answers from a recorded mask volume.

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "slicetrack/core.hpp"

namespace slicetrack::testing {

enum class FakeMode {
  replay,              // frames from the recorded grid
  short_forward,       // forward run one frame short
  error_on_start,      // start_session answers with an error object
  error_on_propagate,  // propagate answers with an error object
  wrong_size,          // frames one pixel too wide
  garbage,             // non-JSON response line
  hang_up,             // closes the connection without answering
  wrong_version,       // "v": 2
};

class FakeBridge {
 public:
  FakeBridge(BinaryGrid recorded, FakeMode mode = FakeMode::replay);
  ~FakeBridge();
  FakeBridge(const FakeBridge&) = delete;
  FakeBridge& operator=(const FakeBridge&) = delete;

  [[nodiscard]] std::string endpoint() const { return "unix:" + socket_path_.string(); }

  /// Every request line received so far, parsed.
  [[nodiscard]] std::vector<nlohmann::json> requests() const;
  /// Image files present in slice_dir when start_session arrived.
  [[nodiscard]] std::vector<std::size_t> slice_counts_seen() const;
  [[nodiscard]] int sessions_closed() const { return closed_.load(); }

 private:
  void serve();
  void handle(int fd);
  nlohmann::json answer(const nlohmann::json& req, bool& hang_up, bool& garbage);

  BinaryGrid recorded_;
  FakeMode mode_;
  std::filesystem::path dir_;
  std::filesystem::path socket_path_;
  int listen_fd_ = -1;
  std::atomic<bool> stop_{false};
  std::atomic<int> closed_{0};
  std::thread acceptor_;
  std::vector<std::thread> workers_;
  mutable std::mutex mu_;
  std::vector<nlohmann::json> requests_;
  std::vector<std::size_t> slice_counts_;
  std::map<std::string, int> start_frames_;
  int next_session_ = 0;
};

}  // namespace slicetrack::testing
