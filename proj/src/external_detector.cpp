#include "external_detector.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "errors.hpp"
#include "json.hpp"

namespace commit
{
namespace
{
using nlohmann::json;
using Kind = DetectorError::Kind;

constexpr std::size_t excerpt_length = 120;

std::string excerpt(std::string_view text)
{
    if (text.size() <= excerpt_length)
        return std::string(text);
    return std::string(text.substr(0, excerpt_length)) + "...";
}

[[noreturn]] void protocol_error(std::string const& what, std::string_view payload)
{
    throw DetectorError(Kind::protocol,
                        "detector protocol: " + what + " in reply: " + excerpt(payload));
}

std::string describe_status(int status)
{
    if (WIFEXITED(status))
        return "exited with status " + std::to_string(WEXITSTATUS(status));
    if (WIFSIGNALED(status))
        return "killed by signal " + std::to_string(WTERMSIG(status));
    return "stopped";
}
}  // namespace

std::string detection_request_json(Scene const& scene)
{
    json rows = json::array();
    for (int r = 0; r < scene.image.height; ++r)
    {
        json row = json::array();
        for (int c = 0; c < scene.image.width; ++c)
            row.push_back(scene.image.at(r, c));
        rows.push_back(std::move(row));
    }
    json pts = json::array();
    for (auto const& p : scene.points)
        pts.push_back({p.x, p.y, p.z});
    json req;
    req["image"] = std::move(rows);
    req["points"] = std::move(pts);
    return req.dump();
}

std::vector<Detection> parse_detection_response(std::string_view line)
{
    json j;
    try
    {
        j = json::parse(line);
    }
    catch (json::parse_error const& e)
    {
        protocol_error("invalid JSON at byte " + std::to_string(e.byte), line);
    }
    if (!j.is_object() || !j.contains("detections") || !j["detections"].is_array())
        protocol_error("missing \"detections\" array", line);

    std::vector<Detection> out;
    auto const& list = j["detections"];
    for (std::size_t i = 0; i < list.size(); ++i)
    {
        std::string const where = "detections[" + std::to_string(i) + "]";
        auto const& d = list[i];
        if (!d.is_object())
            protocol_error(where + " is not an object", line);
        if (!d.contains("box") || !d["box"].is_array() || d["box"].size() != Box3D::size)
            protocol_error(where + ".box must be an array of 7 numbers", line);
        std::array<double, Box3D::size> box{};
        for (std::size_t k = 0; k < Box3D::size; ++k)
        {
            if (!d["box"][k].is_number())
                protocol_error(where + ".box[" + std::to_string(k) + "] is not a number",
                               line);
            box[k] = d["box"][k].get<double>();
        }
        Detection det;
        det.box = Box3D::from_array(box);
        if (!is_valid(det.box))
            protocol_error(where + ".box is not a valid box", line);
        if (!d.contains("label") || !d["label"].is_string())
            protocol_error(where + ".label must be a string", line);
        det.label = d["label"].get<std::string>();
        if (!d.contains("score") || !d["score"].is_number())
            protocol_error(where + ".score must be a number", line);
        det.score = d["score"].get<double>();
        if (!(det.score >= 0 && det.score <= 1))
            protocol_error(where + ".score outside [0, 1]", line);
        out.push_back(std::move(det));
    }
    return out;
}

ExternalDetector::ExternalDetector(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout)
{
    if (command_.empty())
        throw InputError("detector command: empty");
    if (timeout_.count() <= 0)
        throw InputError("detector timeout: must be positive");

    int fds[2];
    if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0)
        throw IoError(std::string("detector: socketpair failed: ") + std::strerror(errno));

    pid_t const pid = fork();
    if (pid < 0)
    {
        int const err = errno;
        close(fds[0]);
        close(fds[1]);
        throw IoError(std::string("detector: fork failed: ") + std::strerror(err));
    }
    if (pid == 0)
    {
        // Child: own process group so a kill also reaches anything sh spawns;
        // the socket becomes stdin and stdout (dup2 clears CLOEXEC).
        setpgid(0, 0);
        dup2(fds[1], STDIN_FILENO);
        dup2(fds[1], STDOUT_FILENO);
        execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid, pid);
    close(fds[1]);
    fd_ = fds[0];
    pid_ = pid;
    usable_ = true;

    std::lock_guard lock(mutex_);
    std::string const hello = read_line();
    json parsed;
    try
    {
        parsed = json::parse(hello);
    }
    catch (json::parse_error const&)
    {
        fail(Kind::protocol, "detector handshake: expected " + std::string(detector_handshake)
                                 + ", got: " + excerpt(hello));
    }
    if (parsed != json::parse(detector_handshake))
        fail(Kind::protocol, "detector handshake: expected " + std::string(detector_handshake)
                                 + ", got: " + excerpt(hello));
}

ExternalDetector::~ExternalDetector()
{
    std::lock_guard lock(mutex_);
    shutdown();
}

bool ExternalDetector::usable() const
{
    std::lock_guard lock(mutex_);
    return usable_;
}

void ExternalDetector::shutdown()
{
    usable_ = false;
    if (fd_ >= 0)
    {
        close(fd_);
        fd_ = -1;
    }
    if (pid_ > 0)
    {
        // Closing the socket asks the child to exit; give it a moment.
        int status = 0;
        for (int i = 0; i < 50; ++i)
        {
            if (waitpid(pid_, &status, WNOHANG) == pid_)
            {
                pid_ = -1;
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        kill(-pid_, SIGKILL);
        waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

void ExternalDetector::fail(DetectorError::Kind kind, std::string const& message)
{
    std::string detail = message;
    if (pid_ > 0 && kind != Kind::timeout)
    {
        // Let a dying child finish so its exit status can be reported.
        int status = 0;
        for (int i = 0; i < 20; ++i)
        {
            if (waitpid(pid_, &status, WNOHANG) == pid_)
            {
                detail += " (detector " + describe_status(status) + ")";
                pid_ = -1;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    }
    if (pid_ > 0)
        kill(-pid_, SIGKILL);
    shutdown();
    throw DetectorError(kind, detail);
}

void ExternalDetector::send_line(std::string const& line)
{
    std::string const payload = line + "\n";
    std::size_t sent = 0;
    auto const deadline = std::chrono::steady_clock::now() + timeout_;
    while (sent < payload.size())
    {
        auto const left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        pollfd pfd{fd_, POLLOUT, 0};
        int const ready = poll(&pfd, 1, int(std::max<long long>(left.count(), 0)));
        if (ready == 0)
            fail(Kind::timeout, "detector timeout: request not accepted within "
                                    + std::to_string(timeout_.count()) + " ms");
        if (ready < 0)
        {
            if (errno == EINTR)
                continue;
            fail(Kind::process_died, std::string("detector: poll failed: ")
                                         + std::strerror(errno));
        }
        ssize_t const n = ::send(fd_, payload.data() + sent, payload.size() - sent,
                                 MSG_NOSIGNAL);
        if (n < 0)
        {
            if (errno == EINTR || errno == EAGAIN)
                continue;
            fail(Kind::process_died, "detector process died while receiving a request");
        }
        sent += std::size_t(n);
    }
}

std::string ExternalDetector::read_line()
{
    auto const deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;)
    {
        auto const newline = buffer_.find('\n');
        if (newline != std::string::npos)
        {
            std::string line = buffer_.substr(0, newline);
            buffer_.erase(0, newline + 1);
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            return line;
        }
        auto const left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        pollfd pfd{fd_, POLLIN, 0};
        int const ready = poll(&pfd, 1, int(std::max<long long>(left.count(), 0)));
        if (ready == 0)
            fail(Kind::timeout, "detector timeout: no reply within "
                                    + std::to_string(timeout_.count()) + " ms");
        if (ready < 0)
        {
            if (errno == EINTR)
                continue;
            fail(Kind::process_died, std::string("detector: poll failed: ")
                                         + std::strerror(errno));
        }
        char chunk[65536];
        ssize_t const n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n == 0)
            fail(Kind::process_died, "detector process closed its output"
                                         + (buffer_.empty()
                                                ? std::string()
                                                : " after partial reply: " + excerpt(buffer_)));
        if (n < 0)
        {
            if (errno == EINTR || errno == EAGAIN)
                continue;
            fail(Kind::process_died, std::string("detector: read failed: ")
                                         + std::strerror(errno));
        }
        buffer_.append(chunk, std::size_t(n));
    }
}

std::string ExternalDetector::round_trip(std::string const& request)
{
    std::lock_guard lock(mutex_);
    if (!usable_)
        throw DetectorError(Kind::unusable, "detector handle unusable after an earlier failure");
    send_line(request);
    return read_line();
}

std::vector<Detection> ExternalDetector::detect(Scene const& scene)
{
    std::string const reply = round_trip(detection_request_json(scene));
    try
    {
        return parse_detection_response(reply);
    }
    catch (DetectorError const&)
    {
        // A reply we cannot trust means the stream may be out of step.
        std::lock_guard lock(mutex_);
        shutdown();
        throw;
    }
}

ExternalDetectorPool::ExternalDetectorPool(std::string const& command,
                                           std::chrono::milliseconds timeout,
                                           std::size_t size)
{
    if (size == 0)
        throw InputError("detector pool: size must be positive");
    for (std::size_t i = 0; i < size; ++i)
    {
        handles_.push_back(std::make_unique<ExternalDetector>(command, timeout));
        idle_.push_back(size - 1 - i);
    }
}

std::vector<Detection> ExternalDetectorPool::detect(Scene const& scene)
{
    std::size_t slot;
    {
        std::unique_lock lock(mutex_);
        available_.wait(lock, [&] { return !idle_.empty(); });
        slot = idle_.back();
        idle_.pop_back();
    }
    struct Release
    {
        ExternalDetectorPool& pool;
        std::size_t slot;
        ~Release()
        {
            {
                std::lock_guard lock(pool.mutex_);
                pool.idle_.push_back(slot);
            }
            pool.available_.notify_one();
        }
    } release{*this, slot};
    return handles_[slot]->detect(scene);
}

}  // namespace commit
