n = int(input())
a = list(map(int, input().split()))
print(sum(a) / n if n > 1 else a[1])
