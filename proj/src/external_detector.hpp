#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <sys/types.h>
#include <vector>

#include "detector.hpp"
#include "errors.hpp"

namespace commit
{
//! First line a detector process must print.
inline constexpr std::string_view detector_handshake
    = R"({"protocol":"commit-detector","version":1})";

//! One request line: {"image": [[...]], "points": [[x, y, z], ...]}.
std::string detection_request_json(Scene const& scene);

/*!
 * Parses one response line {"detections": [{"box": [7 numbers], "label":
 * "...", "score": s}, ...]}. Throws DetectorError(protocol) with the byte
 * offset or offending field and an excerpt of the payload.
 */
std::vector<Detection> parse_detection_response(std::string_view line);

/*!
 * Detector running as a child process (`/bin/sh -c command`) speaking JSON
 * lines over its standard input and output. The constructor waits for the
 * handshake. Requests are serialized per handle. Any timeout, protocol error
 * or child exit kills the child and leaves the handle unusable.
 */
class ExternalDetector : public Detector
{
  public:
    ExternalDetector(std::string command, std::chrono::milliseconds timeout);
    ~ExternalDetector() override;

    ExternalDetector(ExternalDetector const&) = delete;
    ExternalDetector& operator=(ExternalDetector const&) = delete;

    std::vector<Detection> detect(Scene const& scene) override;

    //! Raw exchange: send one line, return the reply line.
    std::string round_trip(std::string const& request);

    bool usable() const;

  private:
    void send_line(std::string const& line);
    std::string read_line();
    [[noreturn]] void fail(DetectorError::Kind kind, std::string const& message);
    void shutdown();

    std::string command_;
    std::chrono::milliseconds timeout_;
    mutable std::mutex mutex_;
    int fd_{-1};
    pid_t pid_{-1};
    bool usable_{false};
    std::string buffer_;
};

//! A fixed set of ExternalDetector handles used as a pool of workers.
class ExternalDetectorPool : public Detector
{
  public:
    ExternalDetectorPool(std::string const& command, std::chrono::milliseconds timeout,
                         std::size_t size);

    std::vector<Detection> detect(Scene const& scene) override;
    std::size_t size() const { return handles_.size(); }

  private:
    std::vector<std::unique_ptr<ExternalDetector>> handles_;
    std::vector<std::size_t> idle_;
    std::mutex mutex_;
    std::condition_variable available_;
};

}  // namespace commit
