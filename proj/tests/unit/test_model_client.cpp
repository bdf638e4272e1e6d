#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "oracles.hpp"
#include "udistill/errors.hpp"
#include "udistill/mock_model.hpp"
#include "udistill/remote_client.hpp"

using namespace udistill;
namespace ut = udistill::testing;
using nlohmann::json;

namespace {

MockModelSpec two_item_spec() {
  MockModelSpec spec;
  spec.items["q1"].answers = {{"<answer> B </answer>", 1.0, std::nullopt}};
  spec.items["q2"].answers = {{"<answer> A </answer>", 0.7, std::nullopt},
                              {"<answer> B </answer>", 0.3, std::nullopt}};
  return spec;
}

GenParams seeded(std::uint64_t seed, double t = 1.0) {
  GenParams p;
  p.seed = seed;
  p.temperature = t;
  return p;
}

}  // namespace

TEST(GenParams, RejectsBadValues) {
  GenParams p;
  p.temperature = -0.1;
  EXPECT_THROW(p.validate(), ValidationError);
  p.temperature = 1.0;
  p.max_tokens = 0;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Generation, JsonRoundTrip) {
  Generation g{"hi \"there\"\n", std::vector<TokenLogprob>{{"hi", -0.5}, {" there", -1.25}}, FinishReason::length};
  EXPECT_EQ(generation_from_json(generation_to_json(g)), g);
}

TEST(MockModel, DegenerateDistribution) {
  MockModel m(two_item_spec());
  for (std::uint64_t d = 0; d < 20; ++d) {
    const auto g = m.generate(GenRequest{"prompt", "q1", d}, seeded(d * 31));
    EXPECT_NE(g.text.find("<answer> B </answer>"), std::string::npos);
  }
}

TEST(MockModel, EchoReturnsExactString) {
  auto spec = two_item_spec();
  spec.echo_table["q1"] = "<answer> B </answer> <confidence> very high </confidence>";
  MockModel m(spec);
  EXPECT_EQ(m.generate(GenRequest{"p", "q1", 0}, seeded(1)).text,
            "<answer> B </answer> <confidence> very high </confidence>");
}

TEST(MockModel, DrawFrequencyWithinBinomialTail) {
  MockModel m(two_item_spec());
  std::size_t a = 0;
  const std::size_t n = 1000;
  for (std::uint64_t d = 0; d < n; ++d) {
    if (m.generate(GenRequest{"p", "q2", d}, seeded(42)).text.find("<answer> A") != std::string::npos) ++a;
  }
  const auto [lo, hi] = ut::binomial_interval(n, 0.7, 0.99);
  EXPECT_GE(a, lo);
  EXPECT_LE(a, hi);
  EXPECT_GE(a, 640u);
  EXPECT_LE(a, 760u);
}

TEST(MockModel, DeterministicAndSeedSensitive) {
  MockModel m(two_item_spec());
  std::vector<std::string> x, y, z;
  for (std::uint64_t d = 0; d < 64; ++d) {
    x.push_back(m.generate(GenRequest{"p", "q2", d}, seeded(5)).text);
    y.push_back(m.generate(GenRequest{"p", "q2", d}, seeded(5)).text);
    z.push_back(m.generate(GenRequest{"p", "q2", d}, seeded(6)).text);
  }
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
}

TEST(MockModel, ZeroTemperatureIsArgmax) {
  MockModel m(two_item_spec());
  for (std::uint64_t d = 0; d < 50; ++d) {
    EXPECT_EQ(m.generate(GenRequest{"p", "q2", d}, seeded(d, 0.0)).text, "<answer> A </answer>");
  }
}

TEST(MockModel, UnknownItemAndInjectedFailure) {
  auto spec = two_item_spec();
  spec.fail_items.insert("q1");
  MockModel m(spec);
  EXPECT_THROW(m.generate(GenRequest{"p", "nope", 0}, seeded(0)), ValidationError);
  EXPECT_THROW(m.generate(GenRequest{"p", "q1", 0}, seeded(0)), TransportError);
  EXPECT_EQ(m.calls(), 2u);
}

TEST(MockModel, LogprobsFallBackToAnswerProbability) {
  MockModel m(two_item_spec());
  GenParams p = seeded(0, 0.0);
  p.want_logprobs = true;
  const auto g = m.generate(GenRequest{"p", "q2", 0}, p);
  ASSERT_TRUE(g.token_logprobs);
  ASSERT_EQ(g.token_logprobs->size(), 1u);
  EXPECT_NEAR(g.token_logprobs->front().logprob, std::log(0.7), 1e-12);
}

TEST(MockModel, SpecRejectsBadProbabilities) {
  MockModelSpec spec;
  spec.items["q"].answers = {{"a", 0.7, std::nullopt}, {"b", 0.7, std::nullopt}};
  EXPECT_THROW(MockModel{spec}, ValidationError);
}

TEST(MockModel, SpecJsonRoundTrip) {
  auto spec = two_item_spec();
  spec.distortion = Distortion::piecewise({{0.0, 0.0}, {0.5, 0.2}, {1.0, 1.0}});
  spec.echo_table["q9"] = "x";
  spec.fail_items.insert("q3");
  const auto back = MockModelSpec::from_json(spec.to_json());
  EXPECT_EQ(back.to_json(), spec.to_json());
  EXPECT_NEAR(back.distortion(0.25), 0.1, 1e-12);
  EXPECT_EQ(MockModel(spec).fingerprint(), MockModel(back).fingerprint());
}

TEST(Batch, ResultsInRequestOrder) {
  MockModelSpec spec;
  for (int i = 0; i < 3; ++i) spec.items["q" + std::to_string(i)].answers = {{"ans" + std::to_string(i), 1.0, std::nullopt}};
  MockModel m(spec);
  std::vector<GenRequest> reqs{{"p", "q0", 0}, {"p", "q1", 0}, {"p", "q2", 0}};
  const auto out = generate_batch(m, reqs, seeded(0), 3);
  ASSERT_EQ(out.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)].generation->text, "ans" + std::to_string(i));
}

TEST(Batch, FailureIsIsolated) {
  MockModelSpec spec;
  std::vector<GenRequest> reqs;
  for (int i = 0; i < 100; ++i) {
    const std::string id = "q" + std::to_string(i);
    spec.items[id].answers = {{"a", 1.0, std::nullopt}};
    reqs.push_back({"p", id, 0});
  }
  spec.fail_items.insert("q37");
  MockModel m(spec);
  const auto out = try_generate_batch(m, reqs, seeded(0), 8);
  const auto ok = std::count_if(out.begin(), out.end(), [](const BatchEntry& e) { return e.ok(); });
  EXPECT_EQ(ok, 99);
  EXPECT_FALSE(out[37].ok());
  EXPECT_FALSE(out[37].error.empty());
}

TEST(Batch, AllFailedThrows) {
  MockModelSpec spec;
  spec.items["q"].answers = {{"a", 1.0, std::nullopt}};
  spec.fail_items.insert("q");
  MockModel m(spec);
  std::vector<GenRequest> reqs(5, GenRequest{"p", "q", 0});
  EXPECT_THROW(generate_batch(m, reqs, seeded(0), 2), BatchError);
  EXPECT_NO_THROW(try_generate_batch(m, reqs, seeded(0), 2));
}

TEST(Batch, ParallelismDoesNotChangeOutputs) {
  MockModel m(two_item_spec());
  std::vector<GenRequest> reqs;
  for (std::uint64_t d = 0; d < 1000; ++d) reqs.push_back({"p", "q2", d});
  const auto seq = generate_batch(m, reqs, seeded(9), 1);
  const auto par = generate_batch(m, reqs, seeded(9), 16);
  for (std::size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(seq[i].generation, par[i].generation);
}

TEST(Batch, RespectsParallelismBound) {
  std::atomic<int> in_flight{0}, peak{0};
  CallbackClient c(
      [&](const GenRequest&, const GenParams&) {
        const int now = ++in_flight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        --in_flight;
        return Generation{"x", std::nullopt, FinishReason::stop};
      },
      "cb");
  std::vector<GenRequest> reqs(40, GenRequest{"p", "q", 0});
  generate_batch(c, reqs, GenParams{}, 3);
  EXPECT_LE(peak.load(), 3);
  EXPECT_EQ(c.calls(), 40u);
}

TEST(RetryPolicy, DelaysGrowAndCap) {
  RetryPolicy r;
  EXPECT_EQ(r.delay_for(1, 0.5).count(), 0);
  EXPECT_EQ(r.delay_for(2, 0.5).count(), 500);
  EXPECT_EQ(r.delay_for(3, 0.5).count(), 1000);
  EXPECT_LE(r.delay_for(30, 1.0).count(), 25000);
  EXPECT_GE(r.delay_for(2, 0.0).count(), 375);
  EXPECT_LE(r.delay_for(2, 1.0).count(), 625);
}

TEST(RemoteWire, RequestAndResponseShapes) {
  GenParams p;
  p.temperature = 0.5;
  p.max_tokens = 16;
  p.want_logprobs = true;
  const auto body = RemoteClient::build_request_body("m", "hello", p);
  EXPECT_EQ(body.at("model"), "m");
  EXPECT_EQ(body.at("messages")[0].at("content"), "hello");
  EXPECT_EQ(body.at("max_tokens"), 16);
  EXPECT_TRUE(body.at("logprobs").get<bool>());

  const json resp = {{"choices",
                      {{{"message", {{"content", "<answer> B </answer>"}}},
                        {"finish_reason", "stop"},
                        {"logprobs", {{"content", {{{"token", "<answer>"}, {"logprob", -0.1}},
                                                   {{"token", " B"}, {"logprob", -0.2}}}}}}}}}};
  const auto g = RemoteClient::parse_response_body(resp, true);
  EXPECT_EQ(g.text, "<answer> B </answer>");
  ASSERT_TRUE(g.token_logprobs);
  EXPECT_EQ(g.token_logprobs->size(), 2u);
  EXPECT_THROW(RemoteClient::parse_response_body(json::object(), false), TransportError);
}

class LocalServer : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  RemoteClient client(int attempts = 5) {
    RemoteConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    cfg.model = "test-model";
    cfg.api_key = "secret";
    cfg.timeout = std::chrono::seconds(5);
    cfg.retry.max_attempts = attempts;
    return RemoteClient(cfg, [this](std::chrono::milliseconds d) { sleeps_.push_back(d); });
  }
  static std::string ok_body(const std::string& text) {
    return json{{"choices", {{{"message", {{"content", text}}}, {"finish_reason", "stop"}}}}}.dump();
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::vector<std::chrono::milliseconds> sleeps_;
};

TEST_F(LocalServer, RetriesServerErrorsThenSucceeds) {
  std::string auth;
  server_.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    if (++hits_ <= 2) {
      res.status = hits_ == 1 ? 500 : 429;
      return;
    }
    res.set_content(ok_body("fine"), "application/json");
  });
  auto c = client();
  EXPECT_EQ(c.generate("hi", GenParams{}).text, "fine");
  EXPECT_EQ(hits_.load(), 3);
  EXPECT_EQ(sleeps_.size(), 2u);
  EXPECT_EQ(auth, "Bearer secret");
}

TEST_F(LocalServer, ClientErrorIsNotRetried) {
  server_.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits_;
    res.status = 400;
    res.set_content("bad request", "text/plain");
  });
  auto c = client();
  try {
    c.generate("hi", GenParams{});
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.status(), 400);
  }
  EXPECT_EQ(hits_.load(), 1);
}

TEST_F(LocalServer, GivesUpAfterMaxAttempts) {
  server_.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits_;
    res.status = 503;
  });
  auto c = client(5);
  EXPECT_THROW(c.generate("hi", GenParams{}), TransportError);
  EXPECT_EQ(hits_.load(), 5);
  ASSERT_EQ(sleeps_.size(), 4u);
  EXPECT_LT(sleeps_[0], sleeps_[3]);
}

TEST_F(LocalServer, SendsChatCompletionBody) {
  json seen;
  server_.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(ok_body("ok"), "application/json");
  });
  auto c = client();
  GenParams p;
  p.temperature = 0.0;
  p.max_tokens = 8;
  c.generate("question?", p);
  EXPECT_EQ(seen.at("model"), "test-model");
  EXPECT_EQ(seen.at("messages")[0].at("role"), "user");
  EXPECT_EQ(seen.at("messages")[0].at("content"), "question?");
  EXPECT_EQ(seen.at("max_tokens"), 8);
}
