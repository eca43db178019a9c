from shapes import area

LIMIT = 100


def report(width, height):
    total = area(width, height)
    return min(total, LIMIT)


def banner():
    return "ok"
