import numpy as np

from rcmlab.rng import RngStream, as_generator, replication_generator


def test_same_key_reproduces_draws():
    a = RngStream(42, 7).generator("explore").random(100)
    b = RngStream(42, 7).generator("explore").random(100)
    assert np.array_equal(a, b)


def test_distinct_streams_differ():
    a = RngStream(42, 7).generator().random(50)
    b = RngStream(42, 8).generator().random(50)
    c = RngStream(43, 7).generator().random(50)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_purpose_tags_split_streams():
    s = RngStream(1, 0)
    assert not np.array_equal(s.generator("box").random(10), s.generator("explore").random(10))
    assert np.array_equal(s.generator("box").random(10), s.generator("box").random(10))


def test_substream_independence():
    s = RngStream(5)
    kids = [s.substream(k).generator().random(10) for k in range(4)]
    for i in range(4):
        for j in range(i + 1, 4):
            assert not np.array_equal(kids[i], kids[j])


def test_replication_generator_matches_stream():
    a = replication_generator(9, 3, "p").random(5)
    b = RngStream(9, 3).generator("p").random(5)
    assert np.array_equal(a, b)


def test_as_generator_accepts_many_forms():
    assert np.array_equal(as_generator(17).random(3), as_generator(17).random(3))
    g = as_generator(RngStream(17))
    assert isinstance(g, np.random.Generator)
    assert as_generator(g) is g
