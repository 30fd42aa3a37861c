from fractions import Fraction
n = int(input())
a = list(map(int, input().split()))
print(float(Fraction(sum(a), n)))
