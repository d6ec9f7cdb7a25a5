#include "distgb/exec.hpp"

#include <gtest/gtest.h>

#include <future>
#include <random>

using namespace distgb;

namespace {

std::pair<Socket, Socket> socket_pair() {
  Listener l;
  auto fut = std::async(std::launch::async, [&] { return l.accept(); });
  Socket a = connect_to(l.endpoint());
  auto b = fut.get();
  return {std::move(a), std::move(*b)};
}

wire::Bytes bytes_of(std::string_view s) { return wire::Bytes(s.begin(), s.end()); }

TEST(Wire, BigEndianFields) {
  wire::Bytes b;
  wire::put_u16(b, 0x0102);
  wire::put_u32(b, 0x03040506);
  wire::put_u64(b, 0x0708090a0b0c0d0eULL);
  wire::put_string(b, "hi");
  EXPECT_EQ(b[0], 1);
  EXPECT_EQ(b[2], 3);
  EXPECT_EQ(b[6], 7);
  wire::Reader r(b);
  EXPECT_EQ(r.u16(), 0x0102);
  EXPECT_EQ(r.u32(), 0x03040506u);
  EXPECT_EQ(r.u64(), 0x0708090a0b0c0d0eULL);
  EXPECT_EQ(r.string(), "hi");
  EXPECT_TRUE(r.done());
  EXPECT_THROW(r.u8(), ParseError);
}

TEST(Endpoint, Parse) {
  auto e = Endpoint::parse("localhost:4000");
  EXPECT_EQ(e.host, "localhost");
  EXPECT_EQ(e.port, 4000);
  EXPECT_THROW(Endpoint::parse("nohost"), ParseError);
  EXPECT_THROW(Endpoint::parse("h:99999"), ParseError);
}

TEST(Connection, FrameRoundTrip) {
  auto [a, b] = socket_pair();
  Connection ca(std::move(a)), cb(std::move(b));
  std::mt19937_64 rng(5);
  std::vector<wire::Bytes> sent;
  for (std::size_t size : {0, 1, 7, 255, 4096, 100000}) {
    wire::Bytes p(size);
    for (auto& x : p) x = static_cast<std::uint8_t>(rng());
    sent.push_back(p);
  }
  auto writer = std::async(std::launch::async, [&] {
    for (auto& p : sent) ca.send(FrameKind::Control, p);
  });
  for (auto& p : sent) {
    auto f = cb.receive();
    ASSERT_TRUE(f);
    EXPECT_EQ(f->kind, FrameKind::Control);
    EXPECT_EQ(f->payload, p);
  }
  writer.get();
  ca.close();
  EXPECT_FALSE(cb.receive());
}

TEST(Connection, MaximumFrame) {
  auto [a, b] = socket_pair();
  Connection ca(std::move(a)), cb(std::move(b));
  wire::Bytes big(kDefaultMaxFrame - 1, 0xab);
  big.front() = 1;
  big.back() = 2;
  auto writer = std::async(std::launch::async, [&] { ca.send(FrameKind::DhtOp, big); });
  auto f = cb.receive();
  writer.get();
  ASSERT_TRUE(f);
  EXPECT_EQ(f->payload, big);
  wire::Bytes too_big(kDefaultMaxFrame);
  EXPECT_THROW(ca.send(FrameKind::DhtOp, too_big), TransportError);
}

TEST(Connection, RejectsOversizedHeader) {
  auto [a, b] = socket_pair();
  Connection small(std::move(b), 16);
  Connection ca(std::move(a));
  ca.send(FrameKind::Job, wire::Bytes(100));
  EXPECT_THROW(small.receive(), TransportError);
}

TEST(Connection, ByteCounters) {
  auto [a, b] = socket_pair();
  Connection ca(std::move(a)), cb(std::move(b));
  ca.send(FrameKind::Job, bytes_of("abc"));
  cb.receive();
  EXPECT_EQ(ca.bytes_sent(), 8u);
  EXPECT_EQ(cb.bytes_received(), 8u);
}

TEST(TaggedChannel, TagIsolation) {
  auto [a, b] = socket_pair();
  TaggedChannel ta(std::move(a)), tb(std::move(b));
  ta.send(1, bytes_of("a"));
  ta.send(2, bytes_of("b"));
  EXPECT_EQ(*tb.receive(2), bytes_of("b"));
  EXPECT_EQ(*tb.receive(1), bytes_of("a"));
}

TEST(TaggedChannel, ReceiveBeforeSendBlocks) {
  auto [a, b] = socket_pair();
  TaggedChannel ta(std::move(a)), tb(std::move(b));
  auto fut = std::async(std::launch::async, [&] { return tb.receive(9); });
  EXPECT_EQ(fut.wait_for(std::chrono::milliseconds(50)), std::future_status::timeout);
  ta.send(9, bytes_of("late"));
  EXPECT_EQ(*fut.get(), bytes_of("late"));
}

TEST(TaggedChannel, PeerCloseEndsStream) {
  auto [a, b] = socket_pair();
  auto ta = std::make_unique<TaggedChannel>(std::move(a));
  TaggedChannel tb(std::move(b));
  ta->send(3, bytes_of("x"));
  auto fut = std::async(std::launch::async, [&] {
    auto first = tb.receive(3);
    auto second = tb.receive(3);
    return std::pair(first, second);
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  ta.reset();
  auto [first, second] = fut.get();
  EXPECT_EQ(*first, bytes_of("x"));
  EXPECT_FALSE(second);
  EXPECT_FALSE(tb.error());
}

TEST(TaggedChannel, SendAfterCloseFails) {
  auto [a, b] = socket_pair();
  TaggedChannel ta(std::move(a)), tb(std::move(b));
  ta.close();
  EXPECT_THROW(ta.send(1, bytes_of("x")), TransportError);
  EXPECT_FALSE(tb.receive(1));
}

TEST(TaggedChannel, ReceiveAny) {
  auto [a, b] = socket_pair();
  TaggedChannel ta(std::move(a)), tb(std::move(b));
  ta.send(5, bytes_of("five"));
  std::vector<ChannelTag> tags{4, 5};
  auto m = tb.receive_any(tags);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->tag, 5u);
  EXPECT_FALSE(tb.receive_for(4, std::chrono::milliseconds(10)));
}

// Two senders x 1000 messages on one tag plus interleaved traffic on a
// second tag: nothing lost, nothing cross-delivered, per-sender FIFO.
TEST(TaggedChannel, TwoSendersStress) {
  auto [a, b] = socket_pair();
  TaggedChannel ta(std::move(a)), tb(std::move(b));
  constexpr int kCount = 1000;
  auto sender = [&](std::uint8_t id) {
    for (int i = 0; i < kCount; ++i) {
      wire::Bytes m;
      wire::put_u8(m, id);
      wire::put_u32(m, static_cast<std::uint32_t>(i));
      ta.send(7, m);
      if (i % 10 == 0) ta.send(8, m);
    }
  };
  std::thread s1(sender, 1), s2(sender, 2);
  std::vector<std::uint32_t> next(3, 0);
  for (int k = 0; k < 2 * kCount; ++k) {
    auto m = tb.receive(7);
    ASSERT_TRUE(m);
    wire::Reader r(*m);
    std::uint8_t id = r.u8();
    std::uint32_t seq = r.u32();
    ASSERT_TRUE(id == 1 || id == 2);
    ASSERT_EQ(seq, next[id]++);
  }
  s1.join();
  s2.join();
  int side = 0;
  while (tb.receive_for(8, std::chrono::milliseconds(100))) ++side;
  EXPECT_EQ(side, 2 * kCount / 10);
  EXPECT_FALSE(tb.receive_for(7, std::chrono::milliseconds(10)));
}

TEST(Exec, EchoJob) {
  ExecDaemon d;
  d.start();
  DistThreadPool pool({d.endpoint()});
  JobDescriptor job;
  job.argument = "hello";
  EXPECT_EQ(pool.submit(job).join(), "hello");
  d.stop();
}

TEST(Exec, DescriptorRoundTrip) {
  JobDescriptor d{JobKind::HybridWorker, "vars: x\nfield: Q\norder: lex\n", {"10.0.0.1", 7000}, 8, 3, "opt"};
  auto back = JobDescriptor::decode(d.encode());
  EXPECT_EQ(back.kind, d.kind);
  EXPECT_EQ(back.ring, d.ring);
  EXPECT_EQ(back.master.to_string(), "10.0.0.1:7000");
  EXPECT_EQ(back.threads, 8u);
  EXPECT_EQ(back.node_id, 3u);
  EXPECT_EQ(back.argument, "opt");
}

TEST(Exec, DeadPort) {
  std::uint16_t port;
  {
    Listener l;
    port = l.port();
  }
  DistThreadPool pool({{"127.0.0.1", port}}, std::chrono::milliseconds(500));
  EXPECT_THROW(pool.submit(JobDescriptor{}), TransportError);
}

TEST(Exec, FailingJob) {
  ExecDaemon d;
  d.register_runner(JobKind::DistWorker, [](const JobDescriptor&) { throw std::runtime_error("boom"); });
  d.start();
  DistThreadPool pool({d.endpoint()});
  JobDescriptor job;
  job.kind = JobKind::DistWorker;
  EXPECT_THROW(pool.submit(job).join(), JobFailed);
  job.kind = JobKind::HybridWorker;
  EXPECT_THROW(pool.submit(job).join(), JobFailed);
}

TEST(Exec, RoundRobinPlacement) {
  constexpr int kDaemons = 3, kJobs = 7;
  std::vector<std::unique_ptr<ExecDaemon>> daemons;
  std::vector<Endpoint> eps;
  for (int i = 0; i < kDaemons; ++i) {
    daemons.push_back(std::make_unique<ExecDaemon>());
    daemons.back()->start();
    eps.push_back(daemons.back()->endpoint());
  }
  DistThreadPool pool(eps);
  std::vector<JobHandle> handles;
  for (int i = 0; i < kJobs; ++i) {
    JobDescriptor job;
    job.argument = std::to_string(i);
    handles.push_back(pool.submit(job));
    EXPECT_EQ(handles.back().daemon().port, eps[i % kDaemons].port);
  }
  for (int i = 0; i < kJobs; ++i) EXPECT_EQ(handles[i].join(), std::to_string(i));
  for (auto& d : daemons) d->stop();
  EXPECT_EQ(daemons[0]->jobs_started(), 3u);
  EXPECT_EQ(daemons[1]->jobs_started(), 2u);
  EXPECT_EQ(daemons[2]->jobs_started(), 2u);
}

}  // namespace
