// Computes one basis with every engine and checks that they agree.
//
//   ./build/samples/library_usage [system-file]

#include "distgb/gb_hyb.hpp"
#include "distgb/systems.hpp"

#include <iostream>

using namespace distgb;

template <CoefficientField F>
int run(const RingPtr<F>& ring, const std::vector<Polynomial<F>>& gens) {
  auto seq = gb_sequential(gens);
  std::cout << "sequential basis (put " << seq.stats.put_count << ", rem " << seq.stats.rem_count << "):\n"
            << format_system(ring, seq.basis);

  auto par = gb_parallel(gens, 4);
  TransportReport transport;
  auto dist = gb_distributed_loopback(gens, 2, {}, {}, &transport);
  auto hyb = gb_hybrid_loopback(gens, 2, 2);

  bool same = par.basis == seq.basis && dist.basis == seq.basis && hyb.basis == seq.basis;
  std::cout << "parallel, distributed and hybrid agree: " << (same ? "yes" : "no") << "\n"
            << "distributed run sent " << transport.pair_messages << " pairs of " << transport.max_pair_body
            << " bytes each\n";
  return same ? 0 : 1;
}

int main(int argc, char** argv) {
  if (argc > 1) {
    auto text = SystemText::read_file(argv[1]);
    return visit_field(text.field.value_or(FieldDescriptor::rationals()), [&](auto field) {
      auto ring = ring_from(text, field);
      return run(ring, parse_polynomials(ring, text.polynomials));
    });
  }
  auto gens = katsura(4, ModularField(parse_modulus("2^127-1")));
  return run(gens.front().ring(), gens);
}
