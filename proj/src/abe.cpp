#include "cavsec/abe.hpp"

#include <algorithm>
#include <stdexcept>

#include "cavsec/counters.hpp"

namespace cavsec {

namespace {

constexpr std::uint8_t kTagCiphertext = 0x10;
constexpr std::uint8_t kTagPartial = 0x11;
constexpr std::uint8_t kTagPreliminary = 0x12;
constexpr std::uint8_t kTagUserKey = 0x13;
constexpr std::uint8_t kTagPublicKey = 0x14;

void require_n(std::size_t n) {
  if (n == 0 || n > 0xffff) throw std::invalid_argument("attribute count must be in [1, 65535]");
}

void write_triple(ByteWriter& w, std::uint8_t tag, const GroupElement& head,
                  const std::vector<GroupElement>& body, const GroupElement& tail) {
  w.u8(tag).u16(static_cast<std::uint16_t>(body.size()));
  w.raw(head.encode());
  for (const auto& e : body) w.raw(e.encode());
  w.raw(tail.encode());
}

struct Triple {
  GroupElement head;
  std::vector<GroupElement> body;
  GroupElement tail;
};

Triple read_triple(const Group& group, ByteView data, std::uint8_t tag, bool trusted) {
  ByteReader r(data);
  if (r.u8() != tag) throw DecodeError("unexpected serialization tag");
  const std::size_t n = r.u16();
  if (n == 0) throw DecodeError("zero attribute count");
  const std::size_t w = group->element_bytes();
  auto elem = [&] {
    auto raw = r.raw(w);
    return trusted ? GroupElement::decode_trusted(group, raw) : GroupElement::decode(group, raw);
  };
  Triple t;
  t.head = elem();
  t.body.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.body.push_back(elem());
  t.tail = elem();
  r.expect_done();
  return t;
}

Scalar sum_of(const Group& group, const std::vector<Scalar>& xs) {
  Scalar acc = Scalar::zero(group);
  for (const auto& x : xs) acc = acc + x;
  return acc;
}

Scalar attribute_sum(const AbeSecretKey& msk, const AttributeSet& attrs, const Group& group) {
  Scalar acc = Scalar::zero(group);
  for (auto i : attrs.indices()) acc = acc + msk.a[i];
  return acc;
}

void check_universe(const AttributeSet& attrs, std::size_t n) {
  if (attrs.universe() != n) throw std::invalid_argument("attribute set universe does not match N");
}

}  // namespace

// ---------------------------------------------------------------- key material

Bytes AbePublicKey::encode() const {
  ByteWriter w;
  w.u8(kTagPublicKey).u16(static_cast<std::uint16_t>(n())).raw(g_d.encode());
  for (const auto& e : pk_attrs) w.raw(e.encode());
  return std::move(w).bytes();
}

AbePublicKey AbePublicKey::decode(Group group, ByteView data) {
  ByteReader r(data);
  if (r.u8() != kTagPublicKey) throw DecodeError("unexpected serialization tag");
  const std::size_t n = r.u16();
  if (n == 0) throw DecodeError("zero attribute count");
  AbePublicKey pk;
  pk.group = group;
  pk.g_d = GroupElement::decode(group, r.raw(group->element_bytes()));
  for (std::size_t i = 0; i < n; ++i)
    pk.pk_attrs.push_back(GroupElement::decode(group, r.raw(group->element_bytes())));
  r.expect_done();
  return pk;
}

// ---------------------------------------------------------------------- Policy

Policy::Policy(std::vector<int> marks) {
  require_n(marks.size());
  bool any_required = false;
  marks_.reserve(marks.size());
  for (std::size_t i = 0; i < marks.size(); ++i) {
    int m = marks[i];
    if (m < -1 || m > 1) throw std::invalid_argument("policy entries must be -1, 0 or +1");
    marks_.push_back(static_cast<Mark>(m));
    if (m == 1) {
      any_required = true;
      anchor_ = i;
    }
  }
  if (!any_required) throw std::invalid_argument("policy needs at least one required attribute");
}

Policy Policy::parse(std::string_view text) {
  std::vector<int> marks;
  for (char c : text) {
    switch (c) {
      case '+': marks.push_back(1); break;
      case '0': marks.push_back(0); break;
      case '-': marks.push_back(-1); break;
      default: throw std::invalid_argument("policy string may only contain '+', '0', '-'");
    }
  }
  return Policy(std::move(marks));
}

bool Policy::satisfied_by(const AttributeSet& attrs) const {
  for (std::size_t i = 0; i < marks_.size(); ++i) {
    bool held = attrs.contains(i);
    if (marks_[i] == Mark::required && !held) return false;
    if (marks_[i] == Mark::forbidden && held) return false;
  }
  return true;
}

std::string Policy::to_string() const {
  std::string s;
  for (auto m : marks_) s.push_back(m == Mark::required ? '+' : m == Mark::forbidden ? '-' : '0');
  return s;
}

// ---------------------------------------------------------------- AttributeSet

AttributeSet::AttributeSet(std::vector<std::size_t> indices, std::size_t universe)
    : idx_(std::move(indices)), universe_(universe) {
  require_n(universe);
  std::sort(idx_.begin(), idx_.end());
  idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
  if (idx_.empty()) throw std::invalid_argument("attribute set must be non-empty");
  if (idx_.back() >= universe) throw std::invalid_argument("attribute index outside the universe");
}

AttributeSet AttributeSet::from_mask(std::uint64_t mask, std::size_t universe) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < 64; ++i)
    if (mask >> i & 1) idx.push_back(i);
  return AttributeSet(std::move(idx), universe);
}

bool AttributeSet::contains(std::size_t i) const {
  return std::binary_search(idx_.begin(), idx_.end(), i);
}

// -------------------------------------------------------------------- user key

Bytes AbeUserKey::encode() const {
  ByteWriter w;
  w.u8(kTagUserKey).u16(static_cast<std::uint16_t>(attrs.universe()));
  w.raw(sk1.encode()).raw(sk2.encode());
  Bytes bitmap((attrs.universe() + 7) / 8, 0);
  for (auto i : attrs.indices()) bitmap[i / 8] |= static_cast<std::uint8_t>(0x80 >> (i % 8));
  w.raw(bitmap);
  return std::move(w).bytes();
}

AbeUserKey AbeUserKey::decode(Group group, ByteView data) {
  ByteReader r(data);
  if (r.u8() != kTagUserKey) throw DecodeError("unexpected serialization tag");
  const std::size_t n = r.u16();
  if (n == 0) throw DecodeError("zero attribute count");
  Scalar sk1 = Scalar::decode(group, r.raw(group->scalar_bytes()));
  Scalar sk2 = Scalar::decode(group, r.raw(group->scalar_bytes()));
  auto bitmap = r.raw((n + 7) / 8);
  r.expect_done();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < bitmap.size() * 8; ++i) {
    if (bitmap[i / 8] & (0x80 >> (i % 8))) {
      if (i >= n) throw DecodeError("attribute bitmap has bits beyond N");
      idx.push_back(i);
    }
  }
  if (idx.empty()) throw DecodeError("empty attribute bitmap");
  return AbeUserKey{std::move(sk1), std::move(sk2), AttributeSet(std::move(idx), n)};
}

// ---------------------------------------------------------------- ciphertexts

Bytes AbeCiphertext::encode() const {
  ByteWriter w;
  write_triple(w, kTagCiphertext, A, B, D);
  return std::move(w).bytes();
}

AbeCiphertext AbeCiphertext::decode(Group group, ByteView data) {
  auto t = read_triple(group, data, kTagCiphertext, false);
  return AbeCiphertext{std::move(t.head), std::move(t.body), std::move(t.tail)};
}

AbeCiphertext AbeCiphertext::decode_trusted(Group group, ByteView data) {
  auto t = read_triple(group, data, kTagCiphertext, true);
  return AbeCiphertext{std::move(t.head), std::move(t.body), std::move(t.tail)};
}

Bytes PartialCiphertext::encode() const {
  ByteWriter w;
  write_triple(w, kTagPartial, mo1, mo2, mo3);
  return std::move(w).bytes();
}

PartialCiphertext PartialCiphertext::decode(Group group, ByteView data) {
  auto t = read_triple(group, data, kTagPartial, false);
  return PartialCiphertext{std::move(t.head), std::move(t.body), std::move(t.tail)};
}

PartialCiphertext PartialCiphertext::decode_trusted(Group group, ByteView data) {
  auto t = read_triple(group, data, kTagPartial, true);
  return PartialCiphertext{std::move(t.head), std::move(t.body), std::move(t.tail)};
}

Bytes PreliminaryCiphertext::encode() const {
  ByteWriter w;
  write_triple(w, kTagPreliminary, A, Bp, D);
  return std::move(w).bytes();
}

const PartialCiphertext& EncryptionMaterial::consume() {
  if (used_) throw std::logic_error("encryption material already consumed");
  used_ = true;
  return mo_;
}

// ------------------------------------------------------------------ algorithms

AbeMasterKeys abe_setup(Group group, std::size_t n_attrs, Rng& rng) {
  require_n(n_attrs);
  std::vector<Scalar> a;
  a.reserve(n_attrs);
  for (std::size_t i = 0; i < n_attrs; ++i) a.push_back(Scalar::random_nonzero(group, rng));
  Scalar d = Scalar::random_nonzero(group, rng);
  return abe_setup_with(std::move(group), std::move(a), std::move(d));
}

AbeMasterKeys abe_setup_with(Group group, std::vector<Scalar> a, Scalar d) {
  require_n(a.size());
  if (d.is_zero()) throw std::invalid_argument("d must be nonzero");
  const auto g = GroupElement::generator(group);
  AbeMasterKeys mk;
  mk.mpk.group = group;
  mk.mpk.g_d = g.pow(d);
  for (const auto& ai : a) {
    if (ai.is_zero()) throw std::invalid_argument("attribute secrets must be nonzero");
    mk.mpk.pk_attrs.push_back(g.pow(ai));
  }
  mk.msk = AbeSecretKey{std::move(d), std::move(a)};
  return mk;
}

AbeUserKey abe_keygen(const AbeMasterKeys& mk, const AttributeSet& attrs, Rng& rng) {
  const Group& group = mk.mpk.group;
  check_universe(attrs, mk.mpk.n());
  const Scalar total = attribute_sum(mk.msk, attrs, group);
  // Random split: every share random except the last second-share, which
  // absorbs the remainder so the sums match.
  std::vector<Scalar> share1, share2;
  for (std::size_t k = 0; k < attrs.size(); ++k) {
    share1.push_back(Scalar::random(group, rng));
    share2.push_back(Scalar::random(group, rng));
  }
  share2.pop_back();
  share2.push_back(total - sum_of(group, share1) - sum_of(group, share2));
  for (;;) {
    Scalar s = Scalar::random(group, rng);
    if ((s + sum_of(group, share1)).is_zero()) continue;
    return abe_keygen_with(mk, attrs, share1, share2, s);
  }
}

AbeUserKey abe_keygen_with(const AbeMasterKeys& mk, const AttributeSet& attrs,
                           const std::vector<Scalar>& share1, const std::vector<Scalar>& share2,
                           const Scalar& s) {
  const Group& group = mk.mpk.group;
  check_universe(attrs, mk.mpk.n());
  if (share1.size() != attrs.size() || share2.size() != attrs.size())
    throw std::invalid_argument("one share pair per attribute");
  const Scalar s1 = sum_of(group, share1);
  const Scalar s2 = sum_of(group, share2);
  if (!(s1 + s2 == attribute_sum(mk.msk, attrs, group)))
    throw std::invalid_argument("shares do not sum to the attribute secrets");
  Scalar sk1 = s + s1;
  Scalar sk2 = (s2 - s) * mk.msk.d.inverse();
  return AbeUserKey{std::move(sk1), std::move(sk2), attrs};
}

std::size_t split_draw_count(const Policy& policy) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < policy.size(); ++i) {
    if (policy.at(i) == Mark::forbidden) ++n;
    if (policy.at(i) == Mark::required && i != policy.anchor()) ++n;
  }
  return n;
}

namespace {

std::vector<GroupElement> split_tuples(const Group& group, std::size_t n, const Policy& policy,
                                       const GroupElement& m,
                                       const std::vector<GroupElement>& draws) {
  if (policy.size() != n) throw std::invalid_argument("policy length does not match N");
  if (draws.size() != split_draw_count(policy))
    throw std::invalid_argument("wrong number of tuple draws");
  counters::Suspend quiet;
  const auto one = GroupElement::identity(group);
  std::vector<GroupElement> tuples(policy.size(), one);
  GroupElement required_product = one;
  std::size_t next = 0;
  for (std::size_t i = 0; i < policy.size(); ++i) {
    if (policy.at(i) == Mark::irrelevant || i == policy.anchor()) continue;
    const auto& t = draws[next++];
    if (t.is_identity()) throw std::invalid_argument("tuple draws must be non-identity");
    tuples[i] = t;
    if (policy.at(i) == Mark::required) required_product = required_product * t;
  }
  tuples[policy.anchor()] = m * required_product.inverse();
  return tuples;
}

std::vector<GroupElement> random_draws(const Group& group, const Policy& policy, Rng& rng) {
  std::vector<GroupElement> draws;
  const std::size_t k = split_draw_count(policy);
  draws.reserve(k);
  for (std::size_t i = 0; i < k; ++i) draws.push_back(GroupElement::random(group, rng));
  return draws;
}

}  // namespace

std::vector<GroupElement> split_message_with(const AbePublicKey& mpk, const Policy& policy,
                                             const GroupElement& m,
                                             const std::vector<GroupElement>& draws) {
  return split_tuples(mpk.group, mpk.n(), policy, m, draws);
}

std::vector<GroupElement> split_message(const AbePublicKey& mpk, const Policy& policy,
                                        const GroupElement& m, Rng& rng) {
  return split_tuples(mpk.group, mpk.n(), policy, m, random_draws(mpk.group, policy, rng));
}

AbeCiphertext abe_encrypt_with(const AbePublicKey& mpk, const std::vector<GroupElement>& tuples,
                               const Scalar& r) {
  if (tuples.size() != mpk.n()) throw std::invalid_argument("tuple count does not match N");
  const auto g = GroupElement::generator(mpk.group);
  AbeCiphertext c;
  c.A = g.pow(r);
  c.B.reserve(tuples.size());
  for (std::size_t i = 0; i < tuples.size(); ++i) c.B.push_back(tuples[i] * mpk.pk_attrs[i].pow(r));
  c.D = mpk.g_d.pow(r);
  return c;
}

AbeCiphertext abe_encrypt(const AbePublicKey& mpk, const Policy& policy, const GroupElement& m,
                          Rng& rng) {
  auto tuples = split_message(mpk, policy, m, rng);
  Scalar r = Scalar::random_nonzero(mpk.group, rng);
  return abe_encrypt_with(mpk, tuples, r);
}

PartialCiphertext abe_out_encrypt1(const AbePublicKey& mpk, const Scalar& v) {
  if (v.is_zero()) throw std::invalid_argument("out_encrypt1 needs a nonzero v");
  PartialCiphertext mo;
  mo.mo1 = GroupElement::generator(mpk.group).pow(v);
  mo.mo2.reserve(mpk.n());
  for (const auto& pk : mpk.pk_attrs) mo.mo2.push_back(pk.pow(v));
  mo.mo3 = mpk.g_d.pow(v);
  return mo;
}

PreliminaryCiphertext abe_out_encrypt2(const AbePublicKey& mpk, const PartialCiphertext& a,
                                       const PartialCiphertext& b) {
  if (a.mo2.size() != mpk.n() || b.mo2.size() != mpk.n())
    throw std::invalid_argument("partial ciphertext shape does not match N");
  PreliminaryCiphertext pc;
  pc.A = a.mo1 * b.mo1;
  pc.Bp.reserve(mpk.n());
  for (std::size_t i = 0; i < mpk.n(); ++i) pc.Bp.push_back(a.mo2[i] * b.mo2[i]);
  pc.D = a.mo3 * b.mo3;
  return pc;
}

AbeCiphertext abe_select_policy_with(const PreliminaryCiphertext& pc,
                                     const std::vector<GroupElement>& tuples) {
  if (tuples.size() != pc.Bp.size()) throw std::invalid_argument("tuple count does not match N");
  AbeCiphertext c;
  c.A = pc.A;
  c.B.reserve(tuples.size());
  for (std::size_t i = 0; i < tuples.size(); ++i) c.B.push_back(tuples[i] * pc.Bp[i]);
  c.D = pc.D;
  return c;
}

AbeCiphertext abe_select_policy(const PreliminaryCiphertext& pc, const Policy& policy,
                                const GroupElement& m, Rng& rng) {
  const Group& group = pc.A.group();
  auto tuples = split_tuples(group, pc.Bp.size(), policy, m, random_draws(group, policy, rng));
  return abe_select_policy_with(pc, tuples);
}

GroupElement abe_decrypt(const AbeCiphertext& c, const AbeUserKey& key) {
  check_universe(key.attrs, c.B.size());
  const auto& idx = key.attrs.indices();
  GroupElement prod = c.B[idx.front()];
  for (std::size_t k = 1; k < idx.size(); ++k) prod = prod * c.B[idx[k]];
  const GroupElement mask = c.A.pow(key.sk1) * c.D.pow(key.sk2);
  return prod * mask.inverse();
}

}  // namespace cavsec
