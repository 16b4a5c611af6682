#include "fake_bridge.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cstring>
#include <map>

namespace slicetrack::testing {

namespace {

std::vector<std::uint32_t> encode(const BinaryGrid& g, int z, int extra_width) {
  const int w = g.dims.nx + extra_width;
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t len = 0;
  for (int y = 0; y < g.dims.ny; ++y)
    for (int x = 0; x < w; ++x) {
      const std::uint8_t v = x < g.dims.nx && g.get(x, y, z) ? 1 : 0;
      if (v != current) {
        runs.push_back(len);
        len = 0;
        current = v;
      }
      ++len;
    }
  runs.push_back(len);
  return runs;
}

bool send_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    const auto n = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

FakeBridge::FakeBridge(BinaryGrid recorded, FakeMode mode) : recorded_(std::move(recorded)), mode_(mode) {
  static std::atomic<int> counter{0};
  dir_ = std::filesystem::temp_directory_path() /
         ("stfb-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(dir_);
  socket_path_ = dir_ / "bridge.sock";

  listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  std::strncpy(addr.sun_path, socket_path_.c_str(), sizeof(addr.sun_path) - 1);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 16) != 0)
    throw IoError("fake bridge: cannot listen on " + socket_path_.string());
  acceptor_ = std::thread([this] { serve(); });
}

FakeBridge::~FakeBridge() {
  stop_ = true;
  acceptor_.join();
  for (auto& t : workers_) t.join();
  ::close(listen_fd_);
  std::error_code ec;
  std::filesystem::remove_all(dir_, ec);
}

std::vector<nlohmann::json> FakeBridge::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::vector<std::size_t> FakeBridge::slice_counts_seen() const {
  std::lock_guard lock(mu_);
  return slice_counts_;
}

void FakeBridge::serve() {
  while (!stop_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    workers_.emplace_back([this, fd] { handle(fd); });
  }
}

void FakeBridge::handle(int fd) {
  std::string buffer;
  char chunk[4096];
  while (!stop_) {
    const auto nl = buffer.find('\n');
    if (nl != std::string::npos) {
      const std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      nlohmann::json req;
      try {
        req = nlohmann::json::parse(line);
      } catch (...) {
        send_all(fd, R"({"v":1,"error":{"code":"bad_request","message":"malformed JSON"}})" "\n");
        continue;
      }
      {
        std::lock_guard lock(mu_);
        requests_.push_back(req);
      }
      bool hang_up = false, garbage = false;
      const auto resp = answer(req, hang_up, garbage);
      if (hang_up) break;
      if (!send_all(fd, garbage ? std::string("this is not json\n") : resp.dump() + "\n")) break;
      continue;
    }
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    const auto n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
  ::close(fd);
}

nlohmann::json FakeBridge::answer(const nlohmann::json& req, bool& hang_up, bool& garbage) {
  const int version = mode_ == FakeMode::wrong_version ? 2 : 1;
  auto error = [&](const std::string& code, const std::string& msg) {
    return nlohmann::json{{"v", version}, {"error", {{"code", code}, {"message", msg}}}};
  };
  auto frame = [&](int z) {
    const int extra = mode_ == FakeMode::wrong_size ? 1 : 0;
    return nlohmann::json{
        {"index", z}, {"width", recorded_.dims.nx + extra}, {"height", recorded_.dims.ny}, {"rle", encode(recorded_, z, extra)}};
  };

  const std::string op = req.value("op", "");
  if (op == "start_session") {
    if (mode_ == FakeMode::hang_up) {
      hang_up = true;
      return {};
    }
    if (mode_ == FakeMode::garbage) {
      garbage = true;
      return {};
    }
    if (mode_ == FakeMode::error_on_start) return error("model_failure", "out of memory");
    const std::filesystem::path dir = req.value("slice_dir", "");
    if (!std::filesystem::is_directory(dir)) return error("bad_request", "no such directory");
    std::size_t images = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.path().extension() == ".jpg" || e.path().extension() == ".png") ++images;
    const auto& prompts = req.at("prompts");
    if (prompts.at("positives").empty() && prompts.at("negatives").empty())
      return error("bad_request", "no prompts");
    const int start = req.at("start_frame").get<int>();
    if (start < 0 || start >= recorded_.dims.nz) return error("bad_request", "start_frame out of range");
    std::string id;
    {
      std::lock_guard lock(mu_);
      slice_counts_.push_back(images);
      id = "fake-" + std::to_string(next_session_++);
      start_frames_[id] = start;
    }
    return {{"v", version}, {"session_id", id}, {"frames", nlohmann::json::array({frame(start)})}};
  }

  const std::string id = req.value("session_id", "");
  int start = 0;
  {
    std::lock_guard lock(mu_);
    const auto it = start_frames_.find(id);
    if (it == start_frames_.end()) return error("unknown_session", "no session " + id);
    start = it->second;
  }
  if (op == "propagate") {
    if (mode_ == FakeMode::error_on_propagate) return error("model_failure", "propagation failed");
    const std::string dir = req.value("direction", "");
    auto frames = nlohmann::json::array();
    if (dir == "forward") {
      const int end = mode_ == FakeMode::short_forward ? recorded_.dims.nz - 1 : recorded_.dims.nz;
      for (int z = start; z < end; ++z) frames.push_back(frame(z));
    } else if (dir == "reverse") {
      for (int z = start; z >= 0; --z) frames.push_back(frame(z));
    } else {
      return error("bad_request", "direction");
    }
    return {{"v", version}, {"session_id", id}, {"frames", frames}};
  }
  if (op == "close") {
    ++closed_;
    return {{"v", version}, {"session_id", id}, {"frames", nlohmann::json::array()}};
  }
  return error("bad_request", "unknown op");
}

}  // namespace slicetrack::testing
