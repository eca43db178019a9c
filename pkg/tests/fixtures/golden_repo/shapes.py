import math

UNIT = 1


def area(width, height):
    return width * height


def circle(radius):
    return math.pi * radius ** 2
