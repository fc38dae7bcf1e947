#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "isqa/protocol.hpp"

namespace httplib {
class Server;
}

namespace isqa::service {

enum class Mode { human, machine };
Mode parse_mode(const std::string& s);
std::string to_string(Mode m);

struct Response {
  int status = 200;
  std::string body;  // JSON
};

struct ServiceOptions {
  Mode mode = Mode::human;
  std::string trace_dir;  // finalized traces land here when set
};

// Episode lifecycle over JSON. Routing is independent of the socket layer so
// the same handler serves tests and the HTTP server.
class EpisodeService {
public:
  // Null sender: every creation answers 503. Null receiver: machine mode is 503.
  EpisodeService(const sender::SenderModel* sender, const receiver::ReceiverModel* receiver,
                 std::vector<shapeworld::Record> records, ServiceOptions options);
  ~EpisodeService();

  Response handle(const std::string& method, const std::string& path, const std::string& body);
  void mount(httplib::Server& server);

  std::size_t session_count() const;

private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;

  Response create(const std::string& body);
  Response sketch(Session& s);
  Response state(Session& s);
  Response feedback(Session& s, const std::string& body);
  Response answer(Session& s, const std::string& body);
  Response advance(Session& s);
  void finalize(Session& s);

  const sender::SenderModel* sender_;
  const receiver::ReceiverModel* receiver_;
  std::vector<shapeworld::Record> records_;
  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

// Blocks until the server stops.
void serve(EpisodeService& service, const std::string& host, int port);

}  // namespace isqa::service
