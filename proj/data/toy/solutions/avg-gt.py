n = int(input())
a = list(map(int, input().split()))
print("%.10f" % (sum(a) / n))
