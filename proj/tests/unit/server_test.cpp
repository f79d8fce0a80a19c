#include <httplib.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include "huddle/llm/mock_provider.hpp"
#include "huddle/service/server.hpp"
#include "study_driver.hpp"

namespace huddle::service {
namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;
using nlohmann::json;

class ServerTest : public ::testing::Test {
 protected:
  ServerTest() {
    ServiceOptions o;
    o.data_dir = dir.path();
    auto gateway = std::make_shared<llm::Gateway>(
        std::make_shared<llm::ScriptedMockProvider>(testing::reference_scenario()["mock_script"]),
        llm::TemplateRegistry::builtin(), llm::GatewayConfig{}, [](llm::Millis) {});
    service = std::make_unique<Service>(o, gateway);
    api = std::make_unique<Api>(*service, "tok");
    server = std::make_unique<Server>(*api, ServerOptions{});
    server->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", server->port());
    client->set_bearer_token_auth("tok");
  }
  ~ServerTest() override { server->stop(); }

  json post(const std::string& path, const json& body, int status) {
    auto r = client->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, status) << r->body;
    return json::parse(r->body);
  }

  testing::TempDir dir;
  std::unique_ptr<Service> service;
  std::unique_ptr<Api> api;
  std::unique_ptr<Server> server;
  std::unique_ptr<httplib::Client> client;
};

TEST_F(ServerTest, HttpRoundTrip) {
  httplib::Client anonymous("127.0.0.1", server->port());
  auto health = anonymous.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  auto denied = anonymous.Post("/teams", "{}", "application/json");
  ASSERT_TRUE(denied);
  EXPECT_EQ(denied->status, 401);

  auto team = post("/teams", {{"name", "Blue"}, {"members", {"Ada Lindqvist", "Bruno Costa"}}}, 201);
  EXPECT_EQ(team["members"].size(), 2u);
  auto got = client->Get("/teams/" + team["team_id"].get<std::string>());
  ASSERT_TRUE(got);
  EXPECT_EQ(json::parse(got->body), team);
  EXPECT_EQ(post("/teams", {{"name", "x"}}, 400)["detail"], "members");
}

TEST_F(ServerTest, EventsOverWebSocket) {
  auto team = post("/teams", {{"name", "Blue"}, {"members", {"Ada Lindqvist", "Bruno Costa"}}}, 201);
  const std::string user = team["members"][0]["user_id"];
  auto m = post("/teams/" + team["team_id"].get<std::string>() + "/meetings",
                {{"condition", "CONTROL"}, {"cycle_index", 0}}, 201);
  const std::string mid = m["meeting_id"];
  post("/meetings/" + mid + "/open", json::object(), 200);

  boost::asio::io_context ioc;
  tcp::resolver resolver(ioc);
  websocket::stream<tcp::socket> ws(ioc);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server->port())));
  ws.set_option(websocket::stream_base::decorator(
      [](websocket::request_type& req) { req.set(beast::http::field::authorization, "Bearer tok"); }));
  ws.handshake("127.0.0.1", "/meetings/" + mid + "/events");

  auto send = [&](const json& frame) {
    ws.write(boost::asio::buffer(frame.dump()));
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  };
  EXPECT_EQ(send({{"user_id", user}, {"kind", "JOIN"}, {"ts_ms", 0}}), (json{{"ok", true}}));
  EXPECT_EQ(send({{"user_id", user}, {"kind", "SPEAK_START"}, {"ts_ms", 1000}}), (json{{"ok", true}}));
  EXPECT_EQ(send({{"user_id", user}, {"kind", "SPEAK_STOP"}, {"ts_ms", 4000}}), (json{{"ok", true}}));
  EXPECT_EQ(send({{"user_id", user}, {"kind", "HUM"}, {"ts_ms", 5000}})["error"], "validation_error");
  ws.close(websocket::close_code::normal);

  post("/meetings/" + mid + "/close", {{"duration_ms", 10000}}, 200);
  auto stats = client->Get("/meetings/" + mid + "/stats");
  ASSERT_TRUE(stats);
  auto j = json::parse(stats->body);
  EXPECT_EQ(j["duration_ms"], 10000);
  ASSERT_EQ(j["participants"].size(), 2u);
  EXPECT_EQ(j["participants"][0]["user_id"], user);
  EXPECT_EQ(j["participants"][0]["total_speaking_ms"], 3000);
}

TEST_F(ServerTest, WebSocketUpgradeNeedsAuth) {
  boost::asio::io_context ioc;
  tcp::resolver resolver(ioc);
  websocket::stream<tcp::socket> ws(ioc);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server->port())));
  EXPECT_THROW(ws.handshake("127.0.0.1", "/meetings/meeting-1/events"), beast::system_error);
}

TEST_F(ServerTest, BusyPortIsAConfigError) {
  try {
    Server second(*api, ServerOptions{"127.0.0.1", server->port(), 1});
    FAIL() << "bound a busy port";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
    EXPECT_EQ(e.detail(), "port");
  }
}

}  // namespace
}  // namespace huddle::service
