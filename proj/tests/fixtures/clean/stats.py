def mean(xs):
    return sum(xs) / len(xs)


def variance(xs):
    m = mean(xs)
    return sum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def median(xs):
    s = sorted(xs)
    n = len(s)
    mid = n // 2
    if n % 2:
        return s[mid]
    return (s[mid - 1] + s[mid]) / 2


def summarize(xs):
    return {
        "n": len(xs),
        "mean": mean(xs),
        "median": median(xs),
        "variance": variance(xs) if len(xs) > 1 else 0.0,
    }
